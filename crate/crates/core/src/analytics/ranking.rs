use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::change::{ChangeTable, PATTERN_COUNT};
use super::events::DayLabel;
use super::AnalyticsError;

/// One triad class and how hard it moved on the first day after events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorScore {
    /// Class index in `1..=16`.
    pub pattern: u8,
    /// Mean `|change|` at `D+1` over events; `None` if every cell was undefined.
    pub score: Option<f64>,
    /// Mean `|change|` at `D+2`, used to break ties.
    pub rebound: Option<f64>,
}

/// Patterns ordered by disruption score (descending), then rebound
/// (descending), then pattern index (ascending). Undefined scores sort last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectorRanking {
    pub entries: Vec<DetectorScore>,
}

impl DetectorRanking {
    pub fn top(&self) -> Option<&DetectorScore> {
        self.entries.first()
    }

    pub fn position(&self, pattern: u8) -> Option<usize> {
        self.entries.iter().position(|e| e.pattern == pattern)
    }

    pub fn get(&self, pattern: u8) -> Option<&DetectorScore> {
        self.entries.iter().find(|e| e.pattern == pattern)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

fn mean_abs(tables: &[ChangeTable], label: DayLabel, pattern: usize) -> Option<f64> {
    let cells: Vec<f64> = tables
        .iter()
        .filter_map(|t| t.cell(label, pattern))
        .map(f64::abs)
        .collect();
    (!cells.is_empty()).then(|| cells.iter().sum::<f64>() / cells.len() as f64)
}

fn descending(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Ranks the 16 patterns by their mean absolute `D+1` change across event
/// tables. Undefined cells are left out of the means.
pub fn rank_detectors(tables: &[ChangeTable]) -> Result<DetectorRanking, AnalyticsError> {
    if tables.is_empty() {
        return Err(AnalyticsError::NoTables);
    }
    let mut entries: Vec<DetectorScore> = (1..=PATTERN_COUNT)
        .map(|p| DetectorScore {
            pattern: p as u8,
            score: mean_abs(tables, DayLabel::AFTER, p),
            rebound: mean_abs(tables, DayLabel::REBOUND, p),
        })
        .collect();
    entries.sort_by(|a, b| {
        descending(a.score, b.score)
            .then_with(|| descending(a.rebound, b.rebound))
            .then_with(|| a.pattern.cmp(&b.pattern))
    });
    Ok(DetectorRanking { entries })
}
