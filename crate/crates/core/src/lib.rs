//! Daily interbank transaction networks as an instability detector.
//!
//! The crate follows a transaction stream from raw CSV rows to a ranked list
//! of triad classes:
//!
//! - [`ingest`]: parse transaction files, pseudonymize bank identifiers, and
//!   group records by calendar day.
//! - [`graph`]: aggregate a day of records into a simple directed weighted
//!   graph; merge days; degree distributions and power-law fits.
//! - [`metrics`]: node count, edge count, average hop distance and density.
//! - [`triads`]: the 16-class directed triad census, with a brute-force
//!   oracle.
//! - [`analytics`]: z-scores, event windows, day-over-day change tables and
//!   detector ranking.
//! - [`synth`]: a seeded scale-free transaction generator with injectable
//!   two-day disruption events.
//! - [`pipeline`] and [`store`]: the end-to-end wiring used by the CLI.

pub mod analytics;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod store;
pub mod synth;
pub mod triads;

pub use analytics::{
    daily_change_table, extract_event_window, flag_anomalies, rank_detectors, zscore_series,
    ChangeTable, DayLabel, DetectorRanking, EventCalendar, EventSpec, EventWindow, MetricSeries,
    PopulationStats,
};
pub use graph::{
    build_graph, degree_distribution, fit_power_law, merge_slices, DailyGraph, DegreeDistribution,
    DegreeKind, Period,
};
pub use ingest::{
    mask_identities, parse_transactions, slice_daily, DailySliceSet, MaskingKey, ParseConfig,
    TransactionRecord,
};
pub use metrics::{compute_macro_metrics, metrics_series, MacroMetrics};
pub use synth::{generate_stream, GeneratorConfig, SyntheticStream};
pub use triads::{brute_force_census, census_series, classify_triad, triad_census, TriadCensus, TriadClass};
