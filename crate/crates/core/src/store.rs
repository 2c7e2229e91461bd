//! On-disk store of ingested, day-sliced records.
//!
//! Layout: `<root>/manifest.json` plus one `days/YYYY-MM-DD.csv` per day in
//! the plain transaction format with ISO dates.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{parse_transactions, write_transactions, DailySliceSet, DateFormat, IngestError, ParseConfig, TransactionRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DAYS_DIR: &str = "days";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Day {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error("date {0} is not in the store")]
    UnknownDate(NaiveDate),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Row count per stored day.
    pub days: BTreeMap<NaiveDate, usize>,
    pub dropped_rows: Vec<DroppedRow>,
    /// Rows whose origin equals their destination; stored, but ignored by
    /// graph construction.
    pub self_loop_rows: usize,
    pub masked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

impl Manifest {
    pub fn total_rows(&self) -> usize {
        self.days.values().sum()
    }
}

#[derive(Debug, Clone)]
pub struct RecordStore {
    root: PathBuf,
    manifest: Manifest,
}

impl RecordStore {
    pub fn day_path(root: &Path, date: NaiveDate) -> PathBuf {
        root.join(DAYS_DIR).join(format!("{date}.csv"))
    }

    /// Writes every slice and the manifest. The manifest's `days` is filled
    /// in from `slices`. Day files already in `root` are left alone.
    pub fn write(root: &Path, slices: &DailySliceSet, mut manifest: Manifest) -> Result<Self, StoreError> {
        let days_dir = root.join(DAYS_DIR);
        fs::create_dir_all(&days_dir).map_err(io_err(&days_dir))?;
        manifest.days.clear();
        for (date, records) in slices.iter() {
            let path = Self::day_path(root, date);
            let file = File::create(&path).map_err(io_err(&path))?;
            write_transactions(BufWriter::new(file), records, DateFormat::Iso8601)
                .map_err(|source| StoreError::Day { path: path.clone(), source })?;
            manifest.days.insert(date, records.len());
        }
        let path = root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest).expect("plain data");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(RecordStore {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest = serde_json::from_str(&text).map_err(|source| StoreError::Manifest { path, source })?;
        Ok(RecordStore {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn dates(&self) -> impl ExactSizeIterator<Item = NaiveDate> + '_ {
        self.manifest.days.keys().copied()
    }

    pub fn load_day(&self, date: NaiveDate) -> Result<Vec<TransactionRecord>, StoreError> {
        if !self.manifest.days.contains_key(&date) {
            return Err(StoreError::UnknownDate(date));
        }
        let path = Self::day_path(&self.root, date);
        let file = File::open(&path).map_err(io_err(&path))?;
        parse_transactions(BufReader::new(file), &ParseConfig::default())
            .map(|o| o.records)
            .map_err(|source| StoreError::Day { path, source })
    }

    /// Days in `first..=last` (either bound optional).
    pub fn load_range(&self, first: Option<NaiveDate>, last: Option<NaiveDate>) -> Result<DailySliceSet, StoreError> {
        let mut slices = DailySliceSet::new();
        for date in self.dates() {
            if first.is_some_and(|f| date < f) || last.is_some_and(|l| date > l) {
                continue;
            }
            slices.extend(self.load_day(date)?);
        }
        Ok(slices)
    }

    pub fn load_all(&self) -> Result<DailySliceSet, StoreError> {
        self.load_range(None, None)
    }
}
