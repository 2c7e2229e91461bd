use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::{Datelike, NaiveDate};
use clap::{Args, Parser, Subcommand};

use triadscope::analytics::{read_series_csv, write_series_csv, ChangeTable, EventCalendar, EventSpec};
use triadscope::graph::{degree_distribution, degree_sequence, fit_power_law, merge_slices, DegreeKind};
use triadscope::ingest::{ColumnSelection, DateFormat, ErrorMode, Masker, MaskingKey, ParseConfig, TransactionWriter};
use triadscope::pipeline::{analyze, event_tables, AnalysisConfig, EventTable, Measurements, SkippedEvent};
use triadscope::store::{DroppedRow, Manifest, RecordStore, DAYS_DIR, MANIFEST_FILE};
use triadscope::synth::{Generator, GeneratorConfig};
use triadscope::triads::{column_name, write_class_sidecar, TriadClass};
use triadscope::{rank_detectors, zscore_series, MetricSeries};

mod source;

use source::Source;

#[derive(Parser)]
#[command(name = "triadscope", version, about = "Daily interbank network metrics and triad censuses")]
struct Cli {
    /// Worker threads for per-day work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, mask and slice transaction files into a day store.
    Ingest(IngestArgs),
    /// Generate a synthetic transaction stream with ground truth.
    Synth(SynthArgs),
    /// Per-day macro metrics and their z-scores.
    Metrics(MetricsArgs),
    /// Per-day triad censuses and their z-scores.
    Census(CensusArgs),
    /// Event change tables from a census CSV.
    Window(WindowArgs),
    /// Rank triad classes from change tables.
    Detect(DetectArgs),
    /// The full pipeline: metrics, census, z-scores, change tables, ranking.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Transaction CSV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Store directory.
    #[arg(long, short)]
    out: PathBuf,
    /// `iso` (YYYY-MM-DD) or `mdy` (M/D/YYYY).
    #[arg(long, default_value = "iso")]
    date_format: DateFormat,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Header names of the date, origin, destination and value columns.
    #[arg(long, value_delimiter = ',', num_args = 4, conflicts_with = "by_position")]
    columns: Option<Vec<String>>,
    /// Take the first four columns in order, whatever the header says.
    #[arg(long)]
    by_position: bool,
    /// File holding the masking secret.
    #[arg(long)]
    key_file: Option<PathBuf>,
    /// Environment variable holding the masking secret.
    #[arg(long, default_value = "TRIADSCOPE_KEY")]
    key_env: String,
    /// Keep bank identifiers as they are.
    #[arg(long, conflicts_with = "key_file")]
    no_mask: bool,
    /// Drop invalid rows and list them in the manifest instead of stopping.
    #[arg(long)]
    skip_bad_rows: bool,
    /// Leave the generation time out of the manifest.
    #[arg(long)]
    no_timestamp: bool,
    /// Replace an existing store.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short)]
    out: PathBuf,
    /// TOML generator config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    banks: Option<usize>,
    /// Tail exponent of the bank propensity law.
    #[arg(long)]
    exponent: Option<f64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    reciprocity: Option<f64>,
    #[arg(long)]
    severity: Option<f64>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    end: Option<NaiveDate>,
    /// `year,start,end` event calendar replacing the configured events.
    #[arg(long, conflicts_with = "no_events")]
    calendar: Option<PathBuf>,
    #[arg(long)]
    no_events: bool,
    /// Date layout of the transaction CSV.
    #[arg(long, default_value = "iso")]
    date_format: DateFormat,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the degree distribution of the merged range graph.
    #[arg(long = "degrees", value_name = "KIND")]
    degrees: Vec<DegreeKind>,
    /// Smallest degree used by the power-law fit.
    #[arg(long, default_value_t = 6)]
    kmin: u64,
}

#[derive(Args)]
struct CensusArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EventArgs {
    /// `year,start,end` event calendar (default: the built-in Eid al-Fitr dates).
    #[arg(long)]
    calendar: Option<PathBuf>,
    /// Extra event as `START..END`; replaces the default calendar.
    #[arg(long = "event", value_name = "START..END")]
    events: Vec<EventSpec>,
    /// Days on each side of the event.
    #[arg(long, default_value_t = 15)]
    radius: u32,
}

impl EventArgs {
    fn events(&self) -> Result<Vec<(Option<i32>, EventSpec)>> {
        let mut out = Vec::new();
        if let Some(path) = &self.calendar {
            let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
            let calendar = EventCalendar::parse(file).with_context(|| format!("{}", path.display()))?;
            out.extend(calendar.entries().iter().map(|&(y, e)| (Some(y), e)));
        } else if self.events.is_empty() {
            let calendar = EventCalendar::eid_al_fitr_2006_2015();
            out.extend(calendar.entries().iter().map(|&(y, e)| (Some(y), e)));
        }
        out.extend(self.events.iter().map(|&e| (None, e)));
        Ok(out)
    }
}

#[derive(Args)]
struct WindowArgs {
    /// Census CSV with columns `date,c1..c16`.
    #[arg(long)]
    series: PathBuf,
    #[command(flatten)]
    events: EventArgs,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Change-table CSVs, one per event.
    #[arg(required = true)]
    tables: Vec<PathBuf>,
    /// Ranking JSON path (default: stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    events: EventArgs,
    /// |z| above which a day is flagged.
    #[arg(long, default_value_t = 3.0)]
    threshold: f64,
    #[arg(long, short)]
    out: PathBuf,
}

/// Whether a run completed cleanly or with skipped input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Clean,
    Warnings,
}

impl Status {
    fn from_warnings(any: bool) -> Self {
        if any {
            Status::Warnings
        } else {
            Status::Clean
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Synth(args) => synth(args),
        Command::Metrics(args) => metrics(args),
        Command::Census(args) => census(args),
        Command::Window(args) => window(args),
        Command::Detect(args) => detect(args),
        Command::Analyze(args) => run_analyze(args),
    };
    match result {
        Ok(Status::Clean) => ExitCode::SUCCESS,
        Ok(Status::Warnings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn warn(message: impl std::fmt::Display) {
    eprintln!("warning: {message}");
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

fn masking_key(args: &IngestArgs) -> Result<MaskingKey> {
    let secret = match &args.key_file {
        Some(path) => {
            let mut bytes = fs::read(path).with_context(|| format!("cannot read key file {}", path.display()))?;
            while bytes.last().is_some_and(|b| *b == b'\n' || *b == b'\r') {
                bytes.pop();
            }
            bytes
        }
        None => match std::env::var_os(&args.key_env) {
            Some(value) => value.into_encoded_bytes(),
            None => bail!(
                "no masking key: pass --key-file, set {}, or use --no-mask",
                args.key_env
            ),
        },
    };
    Ok(MaskingKey::new(secret)?)
}

fn ingest(args: IngestArgs) -> Result<Status> {
    if !args.delimiter.is_ascii() {
        bail!("delimiter must be a single ASCII character");
    }
    let key = if args.no_mask { None } else { Some(masking_key(&args)?) };
    let columns = if args.by_position {
        ColumnSelection::ByPosition
    } else if let Some(c) = &args.columns {
        ColumnSelection::ByName {
            date: c[0].clone(),
            origin: c[1].clone(),
            destination: c[2].clone(),
            value: c[3].clone(),
        }
    } else {
        ColumnSelection::default()
    };
    let config = ParseConfig {
        delimiter: args.delimiter as u8,
        date_format: args.date_format,
        columns,
        mode: if args.skip_bad_rows {
            ErrorMode::SkipWithReport
        } else {
            ErrorMode::FailFast
        },
    };

    if args.out.join(MANIFEST_FILE).exists() {
        if !args.force {
            bail!("{} already holds a store (use --force to replace it)", args.out.display());
        }
        let days = args.out.join(DAYS_DIR);
        if days.exists() {
            fs::remove_dir_all(&days).with_context(|| format!("cannot clear {}", days.display()))?;
        }
    }

    let mut masker = key.as_ref().map(Masker::new);
    let mut manifest = Manifest {
        masked: key.is_some(),
        ..Manifest::default()
    };
    let mut slices = triadscope::DailySliceSet::new();
    let many = args.inputs.len() > 1;
    for path in &args.inputs {
        let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
        let outcome = triadscope::parse_transactions(std::io::BufReader::new(file), &config)
            .with_context(|| format!("{}", path.display()))?;
        for rejected in &outcome.rejected {
            warn(format_args!("{}: {rejected}", path.display()));
            manifest.dropped_rows.push(DroppedRow {
                line: rejected.line,
                reason: if many {
                    format!("{}: {}", path.display(), rejected.kind)
                } else {
                    rejected.kind.to_string()
                },
            });
        }
        manifest.self_loop_rows += outcome.self_loop_lines.len();
        for record in outcome.records {
            let record = match masker.as_mut() {
                Some(m) => m.mask_record(&record)?,
                None => record,
            };
            slices.push(record);
        }
    }
    if !args.no_timestamp {
        manifest.generated_at = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    let store = RecordStore::write(&args.out, &slices, manifest)?;
    let m = store.manifest();
    eprintln!(
        "stored {} rows over {} days in {}",
        m.total_rows(),
        m.days.len(),
        args.out.display()
    );
    Ok(Status::from_warnings(!m.dropped_rows.is_empty()))
}

fn synth(args: SynthArgs) -> Result<Status> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            GeneratorConfig::from_toml(&text).with_context(|| format!("{}", path.display()))?
        }
        None => GeneratorConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = args.$flag {
                config.$field = v;
            }
        )*};
    }
    set!(seed => seed, banks => bank_count, exponent => propensity_exponent, density => target_density,
        reciprocity => reciprocity, severity => severity, start => start_date, end => end_date);
    if args.no_events {
        config.events.clear();
    }
    if let Some(path) = &args.calendar {
        let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
        let calendar = EventCalendar::parse(file).with_context(|| format!("{}", path.display()))?;
        config.events = calendar.events().collect();
    }
    if args.start.is_some() || args.end.is_some() {
        let (first, last) = (config.start_date, config.end_date);
        let before = config.events.len();
        config.events.retain(|e| e.start() >= first && e.day_after() <= last);
        if config.events.len() < before {
            eprintln!("note: dropped {} event(s) outside {first}..{last}", before - config.events.len());
        }
    }
    let generator = Generator::new(config)?;

    create_dir(&args.out)?;
    let mut writer = TransactionWriter::new(create(&args.out.join("transactions.csv"))?, args.date_format)?;
    let mut rows = 0usize;
    for (_, day) in generator.days() {
        for record in &day {
            writer.write(record)?;
        }
        rows += day.len();
    }
    writer.finish()?;
    write_text(&args.out.join("ground_truth.json"), &generator.ground_truth().to_json())?;
    write_json(&args.out.join("metadata.json"), &generator.metadata())?;
    let calendar = EventCalendar::new(
        generator
            .config()
            .events
            .iter()
            .map(|&e| (e.start().year(), e))
            .collect(),
    );
    calendar.write_csv(create(&args.out.join("calendar.csv"))?)?;
    eprintln!("wrote {rows} rows to {}", args.out.display());
    Ok(Status::Clean)
}

/// Days too small to measure are reported but do not change the exit code.
fn report_gaps(kind: &str, gaps: impl IntoIterator<Item = (NaiveDate, String)>) {
    for (date, reason) in gaps {
        warn(format_args!("{kind}: {date} not measured: {reason}"));
    }
}

/// z-scores of the series that have any spread, warning about the others.
fn zscores(series: &[MetricSeries]) -> Vec<MetricSeries> {
    series
        .iter()
        .filter_map(|s| match zscore_series(s) {
            Ok((z, _)) => Some(z),
            Err(e) => {
                warn(format_args!("no z-scores for `{}`: {e}", s.name()));
                None
            }
        })
        .collect()
}

fn write_metrics(out: &Path, m: &Measurements) -> Result<()> {
    m.metrics.write_csv(create(&out.join("metrics.csv"))?)?;
    write_series_csv(create(&out.join("metrics_z.csv"))?, &zscores(&m.metrics.all_series()))?;
    report_gaps("metrics", m.metrics.gaps.iter().map(|g| (g.date, g.reason.clone())));
    Ok(())
}

fn write_census(out: &Path, m: &Measurements) -> Result<()> {
    m.census.write_csv(create(&out.join("census.csv"))?)?;
    write_series_csv(create(&out.join("census_z.csv"))?, &zscores(&m.census.all_series()))?;
    write_class_sidecar(create(&out.join("census_classes.csv"))?)?;
    report_gaps("census", m.census.gaps.iter().map(|g| (g.date, g.reason.clone())));
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<Status> {
    create_dir(&args.out)?;
    let m = args.source.measure(source::Stage::Metrics)?;
    write_metrics(&args.out, &m)?;
    let mut warned = false;
    if !args.degrees.is_empty() {
        let graphs = args.source.graphs()?;
        let merged = merge_slices(&graphs);
        let mut fits = serde_json::Map::new();
        for kind in &args.degrees {
            let dist = degree_distribution(&merged, *kind)?;
            dist.write_csv(create(&args.out.join(format!("degrees_{kind}.csv")))?)?;
            match fit_power_law(&degree_sequence(&merged, *kind), args.kmin) {
                Ok(alpha) => {
                    fits.insert(kind.to_string(), serde_json::json!({ "kmin": args.kmin, "alpha": alpha }));
                }
                Err(e) => {
                    warn(format_args!("no power-law fit for {kind} degrees: {e}"));
                    warned = true;
                }
            }
        }
        write_json(&args.out.join("power_law.json"), &serde_json::Value::Object(fits))?;
    }
    Ok(Status::from_warnings(warned))
}

fn census(args: CensusArgs) -> Result<Status> {
    create_dir(&args.out)?;
    let m = args.source.measure(source::Stage::Census)?;
    write_census(&args.out, &m)?;
    Ok(Status::Clean)
}

fn table_file_name(year: Option<i32>, event: EventSpec) -> String {
    match year {
        Some(y) => format!("change_{y}_{}.csv", event.start()),
        None => format!("change_{}.csv", event.start()),
    }
}

/// Writes one CSV per table under `out`, warns about skipped events.
fn write_tables(
    out: &Path,
    events: &[(Option<i32>, EventSpec)],
    tables: &[EventTable],
    skipped: &[SkippedEvent],
) -> Result<()> {
    for t in tables {
        let year = events.iter().find(|(_, e)| *e == t.event).and_then(|(y, _)| *y);
        t.table.write_csv(create(&out.join(table_file_name(year, t.event)))?)?;
    }
    for s in skipped {
        let missing: Vec<String> = s.missing.iter().map(NaiveDate::to_string).collect();
        if missing.is_empty() {
            warn(format_args!("event {} skipped: {}", s.event, s.reason));
        } else {
            warn(format_args!("event {} skipped: {}: {}", s.event, s.reason, missing.join(", ")));
        }
    }
    Ok(())
}

fn census_columns(series: Vec<MetricSeries>) -> Result<Vec<MetricSeries>> {
    TriadClass::ALL
        .iter()
        .map(|&c| {
            let name = column_name(c);
            series
                .iter()
                .find(|s| s.name() == name)
                .cloned()
                .with_context(|| format!("census CSV lacks column `{name}`"))
        })
        .collect()
}

fn window(args: WindowArgs) -> Result<Status> {
    let file = File::open(&args.series).with_context(|| format!("cannot read {}", args.series.display()))?;
    let series = read_series_csv(file).with_context(|| format!("{}", args.series.display()))?;
    let census = census_columns(series)?;
    let events = args.events.events()?;
    let specs: Vec<EventSpec> = events.iter().map(|e| e.1).collect();
    let (tables, skipped) = event_tables(&census, &specs, args.events.radius)?;
    create_dir(&args.out)?;
    write_tables(&args.out, &events, &tables, &skipped)?;
    Ok(Status::from_warnings(!skipped.is_empty()))
}

fn detect(args: DetectArgs) -> Result<Status> {
    let tables = args
        .tables
        .iter()
        .map(|path| {
            let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
            ChangeTable::parse_csv(file).with_context(|| format!("{}", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let ranking = rank_detectors(&tables)?;
    match &args.out {
        Some(path) => write_text(path, &ranking.to_json())?,
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", ranking.to_json()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(Status::Clean)
}

fn run_analyze(args: AnalyzeArgs) -> Result<Status> {
    let config = AnalysisConfig {
        radius: args.events.radius,
        threshold: args.threshold,
    };
    config.validate()?;
    let events = args.events.events()?;
    let specs: Vec<EventSpec> = events.iter().map(|e| e.1).collect();
    create_dir(&args.out)?;

    let m = args.source.measure(source::Stage::Both)?;
    write_metrics(&args.out, &m)?;
    write_census(&args.out, &m)?;

    let a = analyze(&m, &specs, &config)?;
    write_series_csv(create(&args.out.join("zscores.csv"))?, &a.zscores)?;
    let changes = args.out.join("changes");
    if changes.exists() {
        fs::remove_dir_all(&changes).with_context(|| format!("cannot clear {}", changes.display()))?;
    }
    if !a.tables.is_empty() {
        create_dir(&changes)?;
    }
    write_tables(&changes, &events, &a.tables, &a.skipped)?;
    let ranking_path = args.out.join("ranking.json");
    match &a.ranking {
        Some(r) => {
            write_text(&ranking_path, &r.to_json())?;
            if let Some(top) = r.top() {
                eprintln!("top detector: pattern {} ({})", top.pattern, TriadClass::from_index(top.pattern as usize).map_or("?", |c| c.code()));
            }
        }
        None => {
            if ranking_path.exists() {
                fs::remove_file(&ranking_path)?;
            }
        }
    }
    write_json(
        &args.out.join("analysis.json"),
        &serde_json::json!({
            "config": config,
            "events": specs,
            "stats": a.stats,
            "constant_series": a.constant,
            "anomalies": a.anomalies,
            "skipped_events": a.skipped,
        }),
    )?;
    Ok(Status::from_warnings(!a.skipped.is_empty()))
}
