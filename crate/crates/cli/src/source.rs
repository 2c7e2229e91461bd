//! Where per-day records come from: an ingested store or raw CSV files.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::Args;
use rayon::prelude::*;

use triadscope::graph::{build_graph, DailyGraph};
use triadscope::ingest::{parse_transactions, DailySliceSet, DateFormat, ParseConfig, TransactionRecord};
use triadscope::metrics::{compute_macro_metrics, MetricsReport};
use triadscope::pipeline::{measure_day, Measurements};
use triadscope::store::RecordStore;
use triadscope::triads::{triad_census, CensusReport};

#[derive(Args)]
#[group(required = true, multiple = false, id = "records")]
struct Location {
    /// Store written by `ingest`.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Transaction CSV files, read without masking.
    #[arg(long = "input", num_args = 1..)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
pub struct Source {
    #[command(flatten)]
    location: Location,
    /// Date layout of `--input` files.
    #[arg(long, default_value = "iso")]
    date_format: DateFormat,
    /// First day to include.
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Last day to include.
    #[arg(long)]
    to: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Metrics,
    Census,
    Both,
}

impl Source {
    fn in_range(&self, date: NaiveDate) -> bool {
        self.from.map_or(true, |f| date >= f) && self.to.map_or(true, |t| date <= t)
    }

    /// Runs `f` on every day in range, in parallel, results in date order.
    fn per_day<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(NaiveDate, &[TransactionRecord]) -> T + Sync,
    {
        if let Some(root) = &self.location.store {
            let store = RecordStore::open(root)?;
            let dates: Vec<NaiveDate> = store.dates().filter(|&d| self.in_range(d)).collect();
            return dates
                .par_iter()
                .map(|&d| Ok(f(d, &store.load_day(d)?)))
                .collect();
        }
        let config = ParseConfig::default().with_date_format(self.date_format);
        let mut slices = DailySliceSet::new();
        for path in &self.location.inputs {
            let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
            let outcome =
                parse_transactions(BufReader::new(file), &config).with_context(|| format!("{}", path.display()))?;
            slices.extend(outcome.records.into_iter().filter(|r| self.in_range(r.date())));
        }
        let days: Vec<_> = slices.iter().collect();
        Ok(days.par_iter().map(|&(d, records)| f(d, records)).collect())
    }

    pub fn measure(&self, stage: Stage) -> Result<Measurements> {
        Ok(match stage {
            Stage::Both => Measurements::from_results(self.per_day(measure_day)?),
            Stage::Metrics => Measurements {
                metrics: MetricsReport::from_results(self.per_day(|d, records| {
                    let m = build_graph(records)
                        .map_err(Into::into)
                        .and_then(|b| compute_macro_metrics(&b.graph));
                    (d, m)
                })?),
                census: CensusReport::default(),
            },
            Stage::Census => Measurements {
                metrics: MetricsReport::default(),
                census: CensusReport::from_results(self.per_day(|d, records| {
                    let c = build_graph(records)
                        .map_err(Into::into)
                        .and_then(|b| triad_census(&b.graph));
                    (d, c)
                })?),
            },
        })
    }

    /// Every day's graph in range; days that cannot form a graph are left out.
    pub fn graphs(&self) -> Result<Vec<DailyGraph>> {
        let graphs = self.per_day(|_, records| build_graph(records).ok().map(|b| b.graph))?;
        Ok(graphs.into_iter().flatten().collect())
    }
}
