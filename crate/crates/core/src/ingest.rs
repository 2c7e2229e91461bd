//! Transaction file parsing, identity masking and daily slicing.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;
use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

/// Hex characters kept from the keyed digest (64 bits).
pub const PSEUDONYM_HEX_LEN: usize = 16;

/// Shortest accepted masking secret, in bytes.
pub const MIN_KEY_LEN: usize = 16;

/// One dated transfer between two banks.
///
/// `value` is the opaque per-row quantity of the source file (a count or an
/// amount); it becomes the edge weight once the day is turned into a graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransactionRecord {
    date: NaiveDate,
    origin: Arc<str>,
    destination: Arc<str>,
    value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("empty bank identifier")]
    EmptyIdentifier,
    #[error("value < 1")]
    ValueBelowOne,
}

impl TransactionRecord {
    pub fn new(
        date: NaiveDate,
        origin: impl Into<Arc<str>>,
        destination: impl Into<Arc<str>>,
        value: u64,
    ) -> Result<Self, RecordError> {
        let origin = origin.into();
        let destination = destination.into();
        if origin.is_empty() || destination.is_empty() {
            return Err(RecordError::EmptyIdentifier);
        }
        if value < 1 {
            return Err(RecordError::ValueBelowOne);
        }
        Ok(TransactionRecord {
            date,
            origin,
            destination,
            value,
        })
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn destination(&self) -> &str {
        &self.destination
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    /// A bank sending to itself. Kept at ingest, dropped at graph build.
    pub fn is_self_loop(&self) -> bool {
        self.origin == self.destination
    }
}

/// Date layout of the `date` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DateFormat {
    /// `M/D/YYYY`, optionally with blanks around the slashes (`10 / 5 / 2006`).
    MonthDayYear,
    /// `YYYY-MM-DD`.
    #[default]
    Iso8601,
}

impl DateFormat {
    pub fn parse(self, text: &str) -> Option<NaiveDate> {
        let text = text.trim();
        match self {
            DateFormat::Iso8601 => NaiveDate::parse_from_str(text, "%Y-%m-%d").ok(),
            DateFormat::MonthDayYear => {
                let mut parts = text.split('/').map(str::trim);
                let month = parse_digits(parts.next()?, 1, 2)?;
                let day = parse_digits(parts.next()?, 1, 2)?;
                let year_text = parts.next()?;
                if parts.next().is_some() {
                    return None;
                }
                let year = parse_digits(year_text, 4, 4)?;
                NaiveDate::from_ymd_opt(year as i32, month, day)
            }
        }
    }

    pub fn format(self, date: NaiveDate) -> String {
        match self {
            DateFormat::Iso8601 => date.format("%Y-%m-%d").to_string(),
            DateFormat::MonthDayYear => date.format("%-m/%-d/%Y").to_string(),
        }
    }
}

fn parse_digits(text: &str, min_len: usize, max_len: usize) -> Option<u32> {
    if text.len() < min_len || text.len() > max_len || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

impl FromStr for DateFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iso" | "iso8601" | "ymd" => Ok(DateFormat::Iso8601),
            "mdy" | "m/d/y" | "us" => Ok(DateFormat::MonthDayYear),
            other => Err(format!("unknown date format `{other}` (expected `iso` or `mdy`)")),
        }
    }
}

/// Which source columns hold the four retained fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelection {
    /// Look the columns up by header name (case-insensitive, trimmed).
    ByName {
        date: String,
        origin: String,
        destination: String,
        value: String,
    },
    /// Columns 1..=4 in the order date, origin, destination, value; the header
    /// row is skipped whatever it says.
    ByPosition,
}

impl Default for ColumnSelection {
    fn default() -> Self {
        ColumnSelection::ByName {
            date: "date".into(),
            origin: "origin".into(),
            destination: "destination".into(),
            value: "value".into(),
        }
    }
}

/// What to do with a row that fails validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorMode {
    #[default]
    FailFast,
    SkipWithReport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseConfig {
    pub delimiter: u8,
    pub date_format: DateFormat,
    pub columns: ColumnSelection,
    pub mode: ErrorMode,
}

impl Default for ParseConfig {
    fn default() -> Self {
        ParseConfig {
            delimiter: b',',
            date_format: DateFormat::Iso8601,
            columns: ColumnSelection::default(),
            mode: ErrorMode::FailFast,
        }
    }
}

impl ParseConfig {
    pub fn with_date_format(mut self, date_format: DateFormat) -> Self {
        self.date_format = date_format;
        self
    }

    pub fn with_mode(mut self, mode: ErrorMode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum RowErrorKind {
    #[error("expected {expected} columns, found {found}")]
    ColumnCount { expected: usize, found: usize },
    #[error("unparsable date `{0}`")]
    InvalidDate(String),
    #[error("unparsable value `{0}`")]
    InvalidValue(String),
    #[error("value < 1")]
    ValueBelowOne,
    #[error("empty bank identifier")]
    EmptyIdentifier,
    #[error("field is not valid UTF-8")]
    InvalidUtf8,
}

/// A rejected data row; `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("line {line}: {kind}")]
pub struct RowError {
    pub line: u64,
    pub kind: RowErrorKind,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Row(#[from] RowError),
    #[error("header is missing column `{0}`")]
    MissingColumn(String),
    #[error("header has {0} columns, need at least 4")]
    NarrowHeader(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Result of a successful parse. In fail-fast mode `rejected` is always empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseOutcome {
    pub records: Vec<TransactionRecord>,
    pub rejected: Vec<RowError>,
    /// Lines of accepted rows whose origin equals their destination.
    pub self_loop_lines: Vec<u64>,
}

/// Parses delimiter-separated transaction rows with a header line.
///
/// Records come back in file order. Fields are trimmed. An input without
/// any header line parses to an empty outcome.
pub fn parse_transactions<R: Read>(
    input: R,
    config: &ParseConfig,
) -> Result<ParseOutcome, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut row = csv::ByteRecord::new();
    if !reader.read_byte_record(&mut row)? {
        return Ok(ParseOutcome::default());
    }
    let width = row.len();
    let layout = ColumnLayout::resolve(&row, &config.columns)?;

    let mut outcome = ParseOutcome::default();
    while reader.read_byte_record(&mut row)? {
        let line = row.position().map_or(0, |p| p.line());
        // A lone blank line is not a row.
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        match layout.decode(&row, width, config.date_format) {
            Ok(record) => {
                if record.is_self_loop() {
                    outcome.self_loop_lines.push(line);
                }
                outcome.records.push(record);
            }
            Err(kind) => {
                let err = RowError { line, kind };
                match config.mode {
                    ErrorMode::FailFast => return Err(err.into()),
                    ErrorMode::SkipWithReport => outcome.rejected.push(err),
                }
            }
        }
    }
    Ok(outcome)
}

struct ColumnLayout {
    date: usize,
    origin: usize,
    destination: usize,
    value: usize,
}

impl ColumnLayout {
    fn resolve(header: &csv::ByteRecord, selection: &ColumnSelection) -> Result<Self, IngestError> {
        match selection {
            ColumnSelection::ByPosition => {
                if header.len() < 4 {
                    return Err(IngestError::NarrowHeader(header.len()));
                }
                Ok(ColumnLayout {
                    date: 0,
                    origin: 1,
                    destination: 2,
                    value: 3,
                })
            }
            ColumnSelection::ByName {
                date,
                origin,
                destination,
                value,
            } => {
                let find = |name: &str| {
                    header
                        .iter()
                        .position(|h| {
                            std::str::from_utf8(h)
                                .map(|h| h.trim().eq_ignore_ascii_case(name.trim()))
                                .unwrap_or(false)
                        })
                        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
                };
                Ok(ColumnLayout {
                    date: find(date)?,
                    origin: find(origin)?,
                    destination: find(destination)?,
                    value: find(value)?,
                })
            }
        }
    }

    fn decode(
        &self,
        row: &csv::ByteRecord,
        width: usize,
        date_format: DateFormat,
    ) -> Result<TransactionRecord, RowErrorKind> {
        if row.len() != width {
            return Err(RowErrorKind::ColumnCount {
                expected: width,
                found: row.len(),
            });
        }
        let field = |i: usize| std::str::from_utf8(&row[i]).map_err(|_| RowErrorKind::InvalidUtf8);
        let date_text = field(self.date)?;
        let date = date_format
            .parse(date_text)
            .ok_or_else(|| RowErrorKind::InvalidDate(date_text.to_string()))?;
        let origin = field(self.origin)?;
        let destination = field(self.destination)?;
        if origin.is_empty() || destination.is_empty() {
            return Err(RowErrorKind::EmptyIdentifier);
        }
        let value_text = field(self.value)?;
        let value = match value_text.parse::<i128>() {
            Ok(v) if v < 1 => return Err(RowErrorKind::ValueBelowOne),
            Ok(v) => u64::try_from(v).map_err(|_| RowErrorKind::InvalidValue(value_text.into()))?,
            Err(_) => return Err(RowErrorKind::InvalidValue(value_text.to_string())),
        };
        Ok(TransactionRecord {
            date,
            origin: origin.into(),
            destination: destination.into(),
            value,
        })
    }
}

/// Incremental writer for the `date,origin,destination,value` layout, for
/// streams too large to hold in memory.
pub struct TransactionWriter<W: Write> {
    out: csv::Writer<W>,
    date_format: DateFormat,
}

impl<W: Write> TransactionWriter<W> {
    pub fn new(writer: W, date_format: DateFormat) -> Result<Self, IngestError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["date", "origin", "destination", "value"])?;
        Ok(TransactionWriter { out, date_format })
    }

    pub fn write(&mut self, r: &TransactionRecord) -> Result<(), IngestError> {
        self.out.write_record([
            self.date_format.format(r.date).as_str(),
            &*r.origin,
            &*r.destination,
            r.value.to_string().as_str(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), IngestError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Writes records under the default header `date,origin,destination,value`.
pub fn write_transactions<'a, W, I>(
    writer: W,
    records: I,
    date_format: DateFormat,
) -> Result<(), IngestError>
where
    W: Write,
    I: IntoIterator<Item = &'a TransactionRecord>,
{
    let mut out = TransactionWriter::new(writer, date_format)?;
    for r in records {
        out.write(r)?;
    }
    out.finish()
}

/// Secret for the keyed pseudonym mapping.
#[derive(Clone, PartialEq, Eq)]
pub struct MaskingKey(Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("masking key must be at least {MIN_KEY_LEN} bytes, got {0}")]
    KeyTooShort(usize),
    #[error("pseudonym collision: `{first}` and `{second}` both map to {pseudonym}")]
    Collision {
        first: String,
        second: String,
        pseudonym: String,
    },
}

impl MaskingKey {
    pub fn new(secret: impl Into<Vec<u8>>) -> Result<Self, MaskError> {
        let secret = secret.into();
        if secret.len() < MIN_KEY_LEN {
            return Err(MaskError::KeyTooShort(secret.len()));
        }
        Ok(MaskingKey(secret))
    }

    /// The fixed-width token for one identifier.
    pub fn pseudonym(&self, identifier: &str) -> String {
        let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(&self.0)
            .expect("hmac accepts keys of any length");
        mac.update(identifier.as_bytes());
        let digest = mac.finalize().into_bytes();
        let mut token = hex::encode(digest);
        token.truncate(PSEUDONYM_HEX_LEN);
        token
    }
}

impl fmt::Debug for MaskingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MaskingKey(<{} bytes>)", self.0.len())
    }
}

/// Caches pseudonyms and refuses to map two identifiers onto one token.
#[derive(Debug)]
pub struct Masker<'k> {
    key: &'k MaskingKey,
    forward: HashMap<String, Arc<str>>,
    reverse: HashMap<String, String>,
}

impl<'k> Masker<'k> {
    pub fn new(key: &'k MaskingKey) -> Self {
        Masker {
            key,
            forward: HashMap::new(),
            reverse: HashMap::new(),
        }
    }

    pub fn mask(&mut self, identifier: &str) -> Result<String, MaskError> {
        self.mask_shared(identifier).map(|t| t.to_string())
    }

    fn mask_shared(&mut self, identifier: &str) -> Result<Arc<str>, MaskError> {
        if let Some(token) = self.forward.get(identifier) {
            return Ok(token.clone());
        }
        let token = self.key.pseudonym(identifier);
        if let Some(previous) = self.reverse.get(&token) {
            return Err(MaskError::Collision {
                first: previous.clone(),
                second: identifier.to_string(),
                pseudonym: token,
            });
        }
        self.reverse.insert(token.clone(), identifier.to_string());
        let token: Arc<str> = token.into();
        self.forward.insert(identifier.to_string(), token.clone());
        Ok(token)
    }

    /// Number of distinct identifiers seen so far.
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn mask_record(&mut self, record: &TransactionRecord) -> Result<TransactionRecord, MaskError> {
        Ok(TransactionRecord {
            date: record.date,
            origin: self.mask_shared(&record.origin)?,
            destination: self.mask_shared(&record.destination)?,
            value: record.value,
        })
    }
}

/// Replaces origin and destination with keyed pseudonyms. Dates, values and
/// record order are untouched.
pub fn mask_identities(
    records: &[TransactionRecord],
    key: &MaskingKey,
) -> Result<Vec<TransactionRecord>, MaskError> {
    let mut masker = Masker::new(key);
    records.iter().map(|r| masker.mask_record(r)).collect()
}

/// Records grouped by calendar day; days without records are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DailySliceSet {
    slices: BTreeMap<NaiveDate, Vec<TransactionRecord>>,
}

impl DailySliceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: TransactionRecord) {
        self.slices.entry(record.date).or_default().push(record);
    }

    pub fn get(&self, date: NaiveDate) -> Option<&[TransactionRecord]> {
        self.slices.get(&date).map(Vec::as_slice)
    }

    /// Days in chronological order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (NaiveDate, &[TransactionRecord])> {
        self.slices.iter().map(|(d, r)| (*d, r.as_slice()))
    }

    pub fn dates(&self) -> impl ExactSizeIterator<Item = NaiveDate> + '_ {
        self.slices.keys().copied()
    }

    /// Number of days.
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn record_count(&self) -> usize {
        self.slices.values().map(Vec::len).sum()
    }

    pub fn into_inner(self) -> BTreeMap<NaiveDate, Vec<TransactionRecord>> {
        self.slices
    }
}

impl FromIterator<TransactionRecord> for DailySliceSet {
    fn from_iter<T: IntoIterator<Item = TransactionRecord>>(iter: T) -> Self {
        let mut set = DailySliceSet::new();
        for r in iter {
            set.push(r);
        }
        set
    }
}

impl Extend<TransactionRecord> for DailySliceSet {
    fn extend<T: IntoIterator<Item = TransactionRecord>>(&mut self, iter: T) {
        for r in iter {
            self.push(r);
        }
    }
}

/// Groups records by date, keeping file order within each day.
pub fn slice_daily(records: impl IntoIterator<Item = TransactionRecord>) -> DailySliceSet {
    records.into_iter().collect()
}
