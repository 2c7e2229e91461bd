use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnalyticsError, MetricSeries};

/// A holiday or other disruption spanning `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EventSpec {
    start: NaiveDate,
    end: NaiveDate,
}

impl EventSpec {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, AnalyticsError> {
        if start > end {
            return Err(AnalyticsError::InvertedEvent { start, end });
        }
        Ok(EventSpec { start, end })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    /// The date labelled `label` relative to this event.
    ///
    /// `D-k` counts back from the day before `start`, `D+k` forward from the
    /// day after `end`.
    pub fn date_of(&self, label: DayLabel) -> Option<NaiveDate> {
        let k = label.0.unsigned_abs() as u64;
        if label.0 < 0 {
            self.start.checked_sub_days(Days::new(k))
        } else {
            self.end.checked_add_days(Days::new(k))
        }
    }

    /// First day after the event: where the disruption is expected.
    pub fn day_after(&self) -> NaiveDate {
        self.date_of(DayLabel::AFTER).expect("in range")
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        (self.start..=self.end).contains(&date)
    }
}

impl fmt::Display for EventSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl FromStr for EventSpec {
    type Err = String;

    /// `START..END` or `START:END` (ISO dates), or a single date.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .or_else(|| s.split_once(':'))
            .unwrap_or((s, s));
        let parse = |t: &str| {
            NaiveDate::parse_from_str(t.trim(), "%Y-%m-%d").map_err(|_| format!("unparsable date `{}`", t.trim()))
        };
        EventSpec::new(parse(a)?, parse(b)?).map_err(|e| e.to_string())
    }
}

impl TryFrom<String> for EventSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EventSpec> for String {
    fn from(e: EventSpec) -> String {
        e.to_string()
    }
}

/// Signed offset from an event: `D-3`, `D+1`. Zero is never a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DayLabel(i32);

impl DayLabel {
    pub const BEFORE: DayLabel = DayLabel(-1);
    pub const AFTER: DayLabel = DayLabel(1);
    pub const REBOUND: DayLabel = DayLabel(2);

    pub fn new(offset: i32) -> Option<Self> {
        (offset != 0).then_some(DayLabel(offset))
    }

    pub fn offset(self) -> i32 {
        self.0
    }
}

impl fmt::Display for DayLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 < 0 {
            write!(f, "D-{}", -self.0)
        } else {
            write!(f, "D+{}", self.0)
        }
    }
}

impl FromStr for DayLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad day label `{s}`");
        let rest = s.trim().strip_prefix(['D', 'd']).ok_or_else(bad)?;
        let (sign, digits) = match rest.as_bytes().first() {
            Some(b'-') => (-1, &rest[1..]),
            Some(b'+') => (1, &rest[1..]),
            _ => return Err(bad()),
        };
        if digits.is_empty() || digits.len() > 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let k: i32 = digits.parse().map_err(|_| bad())?;
        DayLabel::new(sign * k).ok_or_else(bad)
    }
}

/// `D-radius..D-1, D+1..D+radius`.
pub fn window_labels(radius: u32) -> Vec<DayLabel> {
    let r = radius as i32;
    (-r..=-1).chain(1..=r).map(DayLabel).collect()
}

/// Values around an event with the event days themselves left out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventWindow {
    pub event: EventSpec,
    pub labels: Vec<DayLabel>,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl EventWindow {
    pub fn radius(&self) -> usize {
        self.labels.len() / 2
    }

    pub fn value(&self, label: DayLabel) -> Option<f64> {
        self.labels.iter().position(|&l| l == label).map(|i| self.values[i])
    }
}

/// Picks `D-radius..D-1` before `event.start` and `D+1..D+radius` after
/// `event.end` out of `series`.
pub fn extract_event_window(
    series: &MetricSeries,
    event: EventSpec,
    radius: u32,
) -> Result<EventWindow, AnalyticsError> {
    if radius == 0 {
        return Err(AnalyticsError::ZeroRadius);
    }
    let labels = window_labels(radius);
    let mut dates = Vec::with_capacity(labels.len());
    let mut values = Vec::with_capacity(labels.len());
    let mut missing = Vec::new();
    for &label in &labels {
        let Some(date) = event.date_of(label) else {
            return Err(AnalyticsError::MissingDates {
                series: series.name().to_string(),
                missing: vec![],
            });
        };
        dates.push(date);
        match series.get(date) {
            Some(v) => values.push(v),
            None => missing.push(date),
        }
    }
    if !missing.is_empty() {
        return Err(AnalyticsError::MissingDates {
            series: series.name().to_string(),
            missing,
        });
    }
    Ok(EventWindow {
        event,
        labels,
        dates,
        values,
    })
}

#[derive(Debug, Error)]
pub enum CalendarError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("calendar header must be `year,start,end`")]
    BadHeader,
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
}

/// Named events, one per row of a `year,start,end` CSV.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct EventCalendar {
    events: Vec<(i32, EventSpec)>,
}

impl EventCalendar {
    pub fn new(events: Vec<(i32, EventSpec)>) -> Self {
        EventCalendar { events }
    }

    /// Eid al-Fitr public holidays in Indonesia, 2006–2015.
    pub fn eid_al_fitr_2006_2015() -> Self {
        const DATES: [(i32, u32, u32, u32); 10] = [
            (2006, 10, 24, 25),
            (2007, 10, 13, 14),
            (2008, 10, 1, 2),
            (2009, 9, 21, 22),
            (2010, 9, 10, 11),
            (2011, 8, 30, 31),
            (2012, 8, 19, 20),
            (2013, 8, 8, 9),
            (2014, 7, 28, 29),
            (2015, 7, 17, 18),
        ];
        EventCalendar {
            events: DATES
                .iter()
                .map(|&(y, m, d0, d1)| {
                    let start = NaiveDate::from_ymd_opt(y, m, d0).expect("valid");
                    let end = NaiveDate::from_ymd_opt(y, m, d1).expect("valid");
                    (y, EventSpec { start, end })
                })
                .collect(),
        }
    }

    pub fn events(&self) -> impl ExactSizeIterator<Item = EventSpec> + '_ {
        self.events.iter().map(|e| e.1)
    }

    pub fn entries(&self) -> &[(i32, EventSpec)] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn parse<R: Read>(reader: R) -> Result<Self, CalendarError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut record = csv::StringRecord::new();
        if !rdr.read_record(&mut record)? {
            return Err(CalendarError::BadHeader);
        }
        let header: Vec<String> = record.iter().map(str::to_ascii_lowercase).collect();
        if header != ["year", "start", "end"] {
            return Err(CalendarError::BadHeader);
        }
        let mut events = Vec::new();
        while rdr.read_record(&mut record)? {
            let line = record.position().map_or(0, |p| p.line());
            let row_err = |message: String| CalendarError::Row { line, message };
            if record.len() != 3 {
                return Err(row_err(format!("expected 3 fields, found {}", record.len())));
            }
            let year: i32 = record[0]
                .parse()
                .map_err(|_| row_err(format!("unparsable year `{}`", &record[0])))?;
            let date = |t: &str| {
                NaiveDate::parse_from_str(t, "%Y-%m-%d").map_err(|_| row_err(format!("unparsable date `{t}`")))
            };
            let start = date(&record[1])?;
            let end = date(&record[2])?;
            let event = EventSpec::new(start, end).map_err(|e| row_err(e.to_string()))?;
            if start.year() != year {
                return Err(row_err(format!("year {year} does not match start {start}")));
            }
            events.push((year, event));
        }
        Ok(EventCalendar { events })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["year", "start", "end"])?;
        for (year, e) in &self.events {
            out.write_record([year.to_string(), e.start.to_string(), e.end.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}
