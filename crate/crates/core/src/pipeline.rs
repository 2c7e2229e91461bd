//! End-to-end wiring: per-day graphs to metrics and censuses, then series,
//! z-scores, event windows, change tables and the detector ranking.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::{
    daily_change_table, extract_event_window, flag_anomalies, rank_detectors, zscore_series, AnalyticsError,
    ChangeTable, DetectorRanking, EventSpec, MetricSeries, PopulationStats,
};
use crate::graph::build_graph;
use crate::ingest::{DailySliceSet, TransactionRecord};
use crate::metrics::{compute_macro_metrics, MacroMetrics, MetricsError, MetricsReport};
use crate::triads::{triad_census, CensusReport, TriadCensus, TriadClass, TriadError};

pub type DayResult = (NaiveDate, Result<MacroMetrics, MetricsError>, Result<TriadCensus, TriadError>);

/// Builds the day's graph once and measures it twice.
pub fn measure_day(date: NaiveDate, records: &[TransactionRecord]) -> DayResult {
    match build_graph(records) {
        Ok(built) => (
            date,
            compute_macro_metrics(&built.graph),
            triad_census(&built.graph),
        ),
        Err(e) => (date, Err(e.clone().into()), Err(e.into())),
    }
}

/// Macro metrics and triad censuses for a run of days.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Measurements {
    pub metrics: MetricsReport,
    pub census: CensusReport,
}

impl Measurements {
    pub fn from_results(results: Vec<DayResult>) -> Self {
        let mut metrics = Vec::with_capacity(results.len());
        let mut census = Vec::with_capacity(results.len());
        for (date, m, c) in results {
            metrics.push((date, m));
            census.push((date, c));
        }
        Measurements {
            metrics: MetricsReport::from_results(metrics),
            census: CensusReport::from_results(census),
        }
    }

    /// The four metric series followed by the 16 census series.
    pub fn all_series(&self) -> Vec<MetricSeries> {
        let mut all: Vec<MetricSeries> = self.metrics.all_series().into();
        all.extend(self.census.all_series());
        all
    }
}

pub fn measure_slices(slices: &DailySliceSet) -> Measurements {
    let days: Vec<_> = slices.iter().collect();
    let results = days.par_iter().map(|&(date, records)| measure_day(date, records)).collect();
    Measurements::from_results(results)
}

/// Measures days produced on demand by `day`, so the full record stream is
/// never held in memory.
pub fn measure_generated<F>(dates: &[NaiveDate], day: F) -> Measurements
where
    F: Fn(NaiveDate) -> Vec<TransactionRecord> + Sync,
{
    let results = dates.par_iter().map(|&d| measure_day(d, &day(d))).collect();
    Measurements::from_results(results)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("window radius must be at least 1")]
    ZeroRadius,
    #[error("z threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub radius: u32,
    pub threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            radius: 15,
            threshold: 3.0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.radius == 0 {
            return Err(PipelineError::ZeroRadius);
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(PipelineError::BadThreshold(self.threshold));
        }
        Ok(())
    }
}

/// An event whose window could not be assembled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedEvent {
    pub event: EventSpec,
    pub reason: String,
    pub missing: Vec<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventTable {
    pub event: EventSpec,
    pub table: ChangeTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub zscores: Vec<MetricSeries>,
    pub stats: BTreeMap<String, PopulationStats>,
    /// Series with no spread, for which z-scores are undefined.
    pub constant: Vec<String>,
    pub anomalies: BTreeMap<String, Vec<NaiveDate>>,
    pub tables: Vec<EventTable>,
    pub skipped: Vec<SkippedEvent>,
    /// `None` when no event produced a table.
    pub ranking: Option<DetectorRanking>,
}

/// Change tables over the 16 census series (class order) for each event.
/// Events whose window is incomplete are returned as skipped.
pub fn event_tables(
    census: &[MetricSeries],
    events: &[EventSpec],
    radius: u32,
) -> Result<(Vec<EventTable>, Vec<SkippedEvent>), PipelineError> {
    if radius == 0 {
        return Err(PipelineError::ZeroRadius);
    }
    let mut tables = Vec::new();
    let mut skipped = Vec::new();
    for &event in events {
        let windows: Result<Vec<_>, _> = census.iter().map(|s| extract_event_window(s, event, radius)).collect();
        match windows.and_then(|w| daily_change_table(&w)) {
            Ok(table) => tables.push(EventTable { event, table }),
            Err(AnalyticsError::MissingDates { missing, .. }) => skipped.push(SkippedEvent {
                event,
                reason: "dates missing from the census series".into(),
                missing,
            }),
            Err(e @ AnalyticsError::ChangeTable(_)) => return Err(e.into()),
            Err(e) => skipped.push(SkippedEvent {
                event,
                reason: e.to_string(),
                missing: vec![],
            }),
        }
    }
    Ok((tables, skipped))
}

/// z-scores and anomaly flags for every series; change tables over the
/// census series for every event; the ranking over those tables.
pub fn analyze(
    measurements: &Measurements,
    events: &[EventSpec],
    config: &AnalysisConfig,
) -> Result<Analysis, PipelineError> {
    config.validate()?;
    let mut zscores = Vec::new();
    let mut stats = BTreeMap::new();
    let mut constant = Vec::new();
    let mut anomalies = BTreeMap::new();
    for series in measurements.all_series() {
        match zscore_series(&series) {
            Ok((z, s)) => {
                anomalies.insert(series.name().to_string(), flag_anomalies(&z, config.threshold)?);
                stats.insert(series.name().to_string(), s);
                zscores.push(z);
            }
            Err(AnalyticsError::ConstantSeries(_) | AnalyticsError::TooShort(_)) => {
                constant.push(series.name().to_string())
            }
            Err(e) => return Err(e.into()),
        }
    }

    let census: Vec<MetricSeries> = TriadClass::ALL.iter().map(|&c| measurements.census.series(c)).collect();
    let (tables, skipped) = event_tables(&census, events, config.radius)?;
    let ranking = if tables.is_empty() {
        None
    } else {
        let t: Vec<ChangeTable> = tables.iter().map(|t| t.table.clone()).collect();
        Some(rank_detectors(&t)?)
    };
    Ok(Analysis {
        zscores,
        stats,
        constant,
        anomalies,
        tables,
        skipped,
        ranking,
    })
}
