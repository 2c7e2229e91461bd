//! Seeded synthetic transaction streams.
//!
//! Each bank gets a fixed activity propensity drawn once per stream from a
//! Pareto law. On a given day every unordered bank pair connects with
//! probability `min(1, c * w_i * w_j)`, where `c` is solved so the expected
//! directed density equals the configured target. A connection is
//! reciprocal with probability `reciprocity`, otherwise it points one way
//! chosen uniformly. Each directed connection is one record whose value is
//! a floored Pareto draw.
//!
//! Event days run at half activity. The first day after each event is a
//! normal day passed through [`Generator::inject_event`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{EventCalendar, EventSpec};
use crate::ingest::TransactionRecord;

/// Connection probability multiplier on event days.
pub const EVENT_DAY_ACTIVITY: f64 = 0.5;
/// Shape of the per-record value law.
pub const VALUE_SHAPE: f64 = 1.5;
/// Smallest record value.
pub const VALUE_MIN: u64 = 1_000;
/// Largest record value; draws above it are clamped.
pub const VALUE_CAP: u64 = 1_000_000_000_000;
/// Disrupted days silence `round(severity^SILENCE_EXPONENT * n)` banks. At
/// the default severity 0.8 that is about a quarter of them.
pub const SILENCE_EXPONENT: i32 = 6;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("target density {target} is unreachable with {banks} banks and reciprocity {reciprocity} (max {max})")]
    InfeasibleDensity {
        target: f64,
        banks: usize,
        reciprocity: f64,
        max: f64,
    },
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub bank_count: usize,
    pub propensity_exponent: f64,
    pub target_density: f64,
    pub reciprocity: f64,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub events: Vec<EventSpec>,
    /// Disruption strength on the day after each event: drives how many
    /// banks fall silent, and is the chance a surviving reciprocal pair
    /// loses one direction.
    pub severity: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            bank_count: 150,
            propensity_exponent: 2.5,
            target_density: 0.24,
            reciprocity: 0.6,
            start_date: NaiveDate::from_ymd_opt(2006, 1, 1).expect("valid"),
            end_date: NaiveDate::from_ymd_opt(2015, 12, 31).expect("valid"),
            events: EventCalendar::eid_al_fitr_2006_2015().events().collect(),
            severity: 0.8,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let config: GeneratorConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data")
    }

    /// Largest directed density the pair model can reach.
    pub fn max_density(&self) -> f64 {
        (1.0 + self.reciprocity) / 2.0
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.bank_count == 0 {
            return bad("bank_count must be positive".into());
        }
        if !(self.propensity_exponent.is_finite() && self.propensity_exponent > 1.0) {
            return bad(format!("propensity_exponent must exceed 1, got {}", self.propensity_exponent));
        }
        if !(self.target_density > 0.0 && self.target_density <= 1.0) {
            return bad(format!("target_density must be in (0, 1], got {}", self.target_density));
        }
        if !(0.0..=1.0).contains(&self.reciprocity) {
            return bad(format!("reciprocity must be in [0, 1], got {}", self.reciprocity));
        }
        if !(0.0..=1.0).contains(&self.severity) {
            return bad(format!("severity must be in [0, 1], got {}", self.severity));
        }
        if self.start_date > self.end_date {
            return bad(format!("start_date {} is after end_date {}", self.start_date, self.end_date));
        }
        for e in &self.events {
            if e.start() < self.start_date || e.end() > self.end_date {
                return bad(format!(
                    "event {e} lies outside {}..{}",
                    self.start_date, self.end_date
                ));
            }
        }
        if self.bank_count < 2 || self.target_density > self.max_density() {
            return Err(SynthError::InfeasibleDensity {
                target: self.target_density,
                banks: self.bank_count,
                reciprocity: self.reciprocity,
                max: if self.bank_count < 2 { 0.0 } else { self.max_density() },
            });
        }
        Ok(())
    }
}

/// Event-to-disrupted-date mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth {
    pub disrupted: BTreeMap<EventSpec, NaiveDate>,
}

impl GroundTruth {
    pub fn dates(&self) -> BTreeSet<NaiveDate> {
        self.disrupted.values().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.disrupted.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticStream {
    pub records: Vec<TransactionRecord>,
    pub ground_truth: GroundTruth,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Floor of a Pareto draw with minimum `xmin` and tail exponent `shape`.
fn pareto(rng: &mut (impl Rng + ?Sized), xmin: f64, shape: f64) -> f64 {
    let u: f64 = rng.random();
    xmin * (1.0 - u).powf(-1.0 / shape)
}

/// Value law: `VALUE_MIN * (1 - u)^(-1 / VALUE_SHAPE)`, floored and capped.
/// With shape 3/2 the power is a cube root, which is far cheaper than `powf`.
fn record_value(u: f64) -> u64 {
    let tail = 1.0 - u;
    let x = VALUE_MIN as f64 / (tail * tail).cbrt();
    x.min(VALUE_CAP as f64) as u64
}

/// What kind of day a date is within a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayKind {
    Baseline,
    Event,
    Disrupted,
}

/// A configured generator: fixed bank propensities plus the solved
/// connection scale.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    labels: Vec<Arc<str>>,
    index: HashMap<String, usize>,
    propensity: Vec<f64>,
    scale: f64,
    event_days: BTreeSet<NaiveDate>,
    ground_truth: GroundTruth,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self, SynthError> {
        config.validate()?;
        let n = config.bank_count;
        let width = (n - 1).to_string().len().max(3);
        let labels: Vec<Arc<str>> = (0..n).map(|i| Arc::from(format!("B{i:0width$}"))).collect();
        let index = labels.iter().enumerate().map(|(i, l)| (l.to_string(), i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed));
        let shape = config.propensity_exponent - 1.0;
        let propensity: Vec<f64> = (0..n).map(|_| pareto(&mut rng, 1.0, shape)).collect();
        let scale = solve_scale(&propensity, &config);
        let mut event_days = BTreeSet::new();
        let mut ground_truth = GroundTruth::default();
        for e in &config.events {
            let mut d = e.start();
            while d <= e.end() {
                event_days.insert(d);
                d = d + Days::new(1);
            }
            ground_truth.disrupted.insert(*e, e.day_after());
        }
        Ok(Generator {
            config,
            labels,
            index,
            propensity,
            scale,
            event_days,
            ground_truth,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn propensities(&self) -> &[f64] {
        &self.propensity
    }

    pub fn labels(&self) -> &[Arc<str>] {
        &self.labels
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.ground_truth
    }

    /// The random stream for one date; independent of every other date.
    pub fn day_rng(&self, date: NaiveDate) -> ChaCha8Rng {
        let day = (date - NaiveDate::default()).num_days() as u64;
        ChaCha8Rng::seed_from_u64(splitmix64(self.config.seed ^ splitmix64(day)))
    }

    pub fn day_kind(&self, date: NaiveDate) -> DayKind {
        if self.event_days.contains(&date) {
            DayKind::Event
        } else if self.ground_truth.disrupted.values().any(|&d| d == date) {
            DayKind::Disrupted
        } else {
            DayKind::Baseline
        }
    }

    pub fn generate_baseline_day(&self, date: NaiveDate, rng: &mut impl Rng) -> Vec<TransactionRecord> {
        self.generate_with_activity(date, 1.0, rng)
    }

    fn generate_with_activity(&self, date: NaiveDate, activity: f64, rng: &mut impl Rng) -> Vec<TransactionRecord> {
        let n = self.labels.len();
        let reciprocity = self.config.reciprocity;
        let mut out = Vec::new();
        let mut emit = |rng: &mut dyn rand::RngCore, s: usize, t: usize| {
            let value = record_value(rng.random());
            out.push(
                TransactionRecord::new(date, self.labels[s].clone(), self.labels[t].clone(), value)
                    .expect("labels and values are valid"),
            );
        };
        for i in 0..n {
            let wi = self.propensity[i] * self.scale * activity;
            for j in i + 1..n {
                let p = (wi * self.propensity[j]).min(1.0);
                if rng.random::<f64>() >= p {
                    continue;
                }
                if rng.random::<f64>() < reciprocity {
                    emit(rng, i, j);
                    emit(rng, j, i);
                } else if rng.random::<bool>() {
                    emit(rng, i, j);
                } else {
                    emit(rng, j, i);
                }
            }
        }
        out
    }

    /// Silences `round(severity^SILENCE_EXPONENT * bank_count)` banks, sampled without
    /// replacement with probability proportional to propensity, then drops
    /// one direction of each surviving reciprocal pair with probability
    /// `severity`. Banks unknown to the generator have propensity 1.
    pub fn inject_event(
        &self,
        records: Vec<TransactionRecord>,
        severity: f64,
        rng: &mut impl Rng,
    ) -> Vec<TransactionRecord> {
        let severity = severity.clamp(0.0, 1.0);
        if severity == 0.0 {
            return records;
        }
        let n = self.labels.len();
        let k = (severity.powi(SILENCE_EXPONENT) * n as f64).round() as usize;
        // Weighted sampling without replacement: keep the k largest u^(1/w).
        let mut keys: Vec<(f64, usize)> = (0..n)
            .map(|i| (rng.random::<f64>().powf(1.0 / self.propensity[i]), i))
            .collect();
        keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let silenced: BTreeSet<&str> = keys[..k].iter().map(|&(_, i)| &*self.labels[i]).collect();
        let silent_unknown = severity >= 1.0;
        let alive = |bank: &str| {
            if self.index.contains_key(bank) {
                !silenced.contains(bank)
            } else {
                !silent_unknown
            }
        };
        let survivors: Vec<TransactionRecord> = records
            .into_iter()
            .filter(|r| alive(r.origin()) && alive(r.destination()))
            .collect();

        let directed: BTreeSet<(&str, &str)> = survivors.iter().map(|r| (r.origin(), r.destination())).collect();
        let mut cut: BTreeSet<(String, String)> = BTreeSet::new();
        for &(a, b) in &directed {
            if a < b && directed.contains(&(b, a)) && rng.random::<f64>() < severity {
                let (s, t) = if rng.random::<bool>() { (a, b) } else { (b, a) };
                cut.insert((s.to_string(), t.to_string()));
            }
        }
        survivors
            .into_iter()
            .filter(|r| !cut.contains(&(r.origin().to_string(), r.destination().to_string())))
            .collect()
    }

    /// All records for `date`, following the stream's event schedule.
    pub fn day(&self, date: NaiveDate) -> Vec<TransactionRecord> {
        let mut rng = self.day_rng(date);
        match self.day_kind(date) {
            DayKind::Baseline => self.generate_baseline_day(date, &mut rng),
            DayKind::Event => self.generate_with_activity(date, EVENT_DAY_ACTIVITY, &mut rng),
            DayKind::Disrupted => {
                let day = self.generate_baseline_day(date, &mut rng);
                self.inject_event(day, self.config.severity, &mut rng)
            }
        }
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.config.start_date.iter_days().take_while(|d| *d <= self.config.end_date)
    }

    /// Days in order, generated lazily.
    pub fn days(&self) -> impl Iterator<Item = (NaiveDate, Vec<TransactionRecord>)> + '_ {
        self.dates().map(|d| (d, self.day(d)))
    }

    /// Description of the distributional conventions, for output metadata.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "conventions": {
                "propensity": format!(
                    "Pareto, xmin 1, tail exponent {}; drawn once per stream",
                    self.config.propensity_exponent
                ),
                "connection": "unordered pair connects with probability min(1, c*w_i*w_j); c solved for the target density",
                "connection_scale": self.scale,
                "direction": "reciprocal with probability `reciprocity`, else one direction chosen uniformly",
                "value": format!("floor of Pareto, xmin {VALUE_MIN}, tail exponent {VALUE_SHAPE}, capped at {VALUE_CAP}"),
                "event_days": format!("connection probability multiplied by {EVENT_DAY_ACTIVITY}"),
                "disruption": "round(severity^6*n) banks silenced, sampled without replacement proportionally to propensity; each surviving reciprocal pair loses one direction with probability severity",
                "day_seed": "splitmix64(seed ^ splitmix64(days since 1970-01-01)) into ChaCha8",
            },
        })
    }
}

/// Solves `sum_{i<j} min(1, c w_i w_j) * (1 + r) = density * n (n - 1)` for `c`.
fn solve_scale(w: &[f64], config: &GeneratorConfig) -> f64 {
    let n = w.len();
    let target = config.target_density * (n * (n - 1)) as f64 / (1.0 + config.reciprocity);
    let expected = |c: f64| {
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                sum += (c * w[i] * w[j]).min(1.0);
            }
        }
        sum
    };
    let min_product = w
        .iter()
        .flat_map(|a| w.iter().map(move |b| a * b))
        .fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, 1.0 / min_product);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Materializes every day of the configured stream.
pub fn generate_stream(config: &GeneratorConfig) -> Result<SyntheticStream, SynthError> {
    let generator = Generator::new(config.clone())?;
    let records = generator.days().flat_map(|(_, r)| r).collect();
    Ok(SyntheticStream {
        records,
        ground_truth: generator.ground_truth.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, degree_sequence, fit_power_law, merge_slices, DegreeKind};
    use crate::metrics::compute_macro_metrics;
    use crate::triads::{triad_census, TriadClass};

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn short(days: u64, events: Vec<EventSpec>) -> GeneratorConfig {
        let start = ymd(2014, 7, 1);
        GeneratorConfig {
            start_date: start,
            end_date: start + Days::new(days - 1),
            events,
            seed: 11,
            ..GeneratorConfig::default()
        }
    }

    fn event(a: NaiveDate, b: NaiveDate) -> EventSpec {
        EventSpec::new(a, b).unwrap()
    }

    #[test]
    fn value_law_matches_pareto_quantiles() {
        for u in [0.0f64, 0.1, 0.5, 0.9, 0.999] {
            let want = VALUE_MIN as f64 * (1.0 - u).powf(-1.0 / VALUE_SHAPE);
            assert_eq!(record_value(u), want.floor() as u64, "u = {u}");
        }
        assert_eq!(record_value(1.0 - 1e-30), VALUE_CAP);
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let c = GeneratorConfig::default();
        c.validate().unwrap();
        assert_eq!(c.events.len(), 10);
        assert_eq!(GeneratorConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = GeneratorConfig::from_toml("bank_count = 20\nseed = 3\n").unwrap();
        assert_eq!(partial.bank_count, 20);
        assert_eq!(partial.severity, 0.8);
        assert!(GeneratorConfig::from_toml("banks = 3").is_err());
        assert!(GeneratorConfig::from_toml("events = [\"2014-07-29..2014-07-28\"]").is_err());
    }

    #[test]
    fn invalid_configs() {
        let base = GeneratorConfig::default();
        let cases = [
            GeneratorConfig { bank_count: 0, ..base.clone() },
            GeneratorConfig { propensity_exponent: 1.0, ..base.clone() },
            GeneratorConfig { target_density: 0.0, ..base.clone() },
            GeneratorConfig { reciprocity: 1.5, ..base.clone() },
            GeneratorConfig { severity: -0.1, ..base.clone() },
            GeneratorConfig { end_date: ymd(2005, 1, 1), ..base.clone() },
            GeneratorConfig { events: vec![event(ymd(2020, 1, 1), ymd(2020, 1, 2))], ..base.clone() },
        ];
        for c in cases {
            assert!(matches!(Generator::new(c), Err(SynthError::InvalidConfig(_))));
        }
        let dense = GeneratorConfig { target_density: 0.9, ..base.clone() };
        assert!(matches!(Generator::new(dense), Err(SynthError::InfeasibleDensity { .. })));
        let lone = GeneratorConfig { bank_count: 1, ..base };
        assert!(matches!(Generator::new(lone), Err(SynthError::InfeasibleDensity { .. })));
    }

    #[test]
    fn no_reciprocity_means_no_mutual_classes() {
        let g = Generator::new(GeneratorConfig { reciprocity: 0.0, ..short(5, vec![]) }).unwrap();
        for (_, day) in g.days() {
            let c = triad_census(&build_graph(&day).unwrap().graph).unwrap();
            for class in TriadClass::ALL.into_iter().filter(|c| c.has_mutual()) {
                assert_eq!(c.get(class), 0, "{class}");
            }
        }
    }

    #[test]
    fn realized_density_near_target() {
        let g = Generator::new(short(100, vec![])).unwrap();
        let mean: f64 = g
            .days()
            .map(|(_, day)| compute_macro_metrics(&build_graph(&day).unwrap().graph).unwrap().density)
            .sum::<f64>()
            / 100.0;
        assert!((0.15..=0.30).contains(&mean), "mean density {mean}");
    }

    #[test]
    fn two_banks() {
        let g = Generator::new(GeneratorConfig { bank_count: 2, ..short(30, vec![]) }).unwrap();
        for (_, day) in g.days() {
            assert!(day.len() <= 2);
            let pairs: BTreeSet<_> = day.iter().map(|r| (r.origin().to_string(), r.destination().to_string())).collect();
            assert_eq!(pairs.len(), day.len());
        }
    }

    #[test]
    fn severity_extremes() {
        let g = Generator::new(short(1, vec![])).unwrap();
        let date = ymd(2014, 7, 1);
        let day = g.generate_baseline_day(date, &mut g.day_rng(date));
        assert!(!day.is_empty());
        assert_eq!(g.inject_event(day.clone(), 0.0, &mut g.day_rng(date)), day);
        assert!(g.inject_event(day, 1.0, &mut g.day_rng(date)).is_empty());
    }

    #[test]
    fn disruption_hits_reciprocal_triads_hardest() {
        let g = Generator::new(short(1, vec![])).unwrap();
        let date = ymd(2014, 7, 1);
        let mut rng = g.day_rng(date);
        let day = g.generate_baseline_day(date, &mut rng);
        let before = triad_census(&build_graph(&day).unwrap().graph).unwrap();
        let after = triad_census(&build_graph(&g.inject_event(day, 0.8, &mut rng)).unwrap().graph).unwrap();
        let drop = |c: TriadClass| 1.0 - after.get(c) as f64 / before.get(c) as f64;
        let top = drop(TriadClass::T300);
        for class in TriadClass::ALL[3..15].iter().copied().filter(|&c| before.get(c) > 0) {
            assert!(top >= drop(class), "{class}: {} vs {top}", drop(class));
        }
    }

    #[test]
    fn stream_schedule_and_ground_truth() {
        let e = event(ymd(2014, 7, 10), ymd(2014, 7, 11));
        let g = Generator::new(short(20, vec![e])).unwrap();
        assert_eq!(g.day_kind(ymd(2014, 7, 10)), DayKind::Event);
        assert_eq!(g.day_kind(ymd(2014, 7, 12)), DayKind::Disrupted);
        assert_eq!(g.day_kind(ymd(2014, 7, 13)), DayKind::Baseline);
        let sizes: Vec<usize> = g.days().map(|(_, r)| r.len()).collect();
        assert!(sizes[9] < sizes[8] && sizes[10] < sizes[8]);
        assert!(sizes[11] < sizes[10]);
        assert_eq!(g.ground_truth().dates(), BTreeSet::from([ymd(2014, 7, 12)]));
        assert_eq!(g.ground_truth().to_json(), "{\n  \"2014-07-10..2014-07-11\": \"2014-07-12\"\n}");
    }

    #[test]
    fn default_calendar_ground_truth() {
        let g = Generator::new(GeneratorConfig::default()).unwrap();
        let dates = g.ground_truth().dates();
        assert_eq!(dates.len(), 10);
        assert!(dates.contains(&ymd(2014, 7, 30)));
        assert!(dates.contains(&ymd(2015, 7, 19)));
        let s = generate_stream(&short(3, vec![])).unwrap();
        assert!(s.ground_truth.is_empty());
    }

    #[test]
    fn deterministic_and_day_independent() {
        let c = short(6, vec![event(ymd(2014, 7, 2), ymd(2014, 7, 3))]);
        assert_eq!(generate_stream(&c).unwrap(), generate_stream(&c).unwrap());
        let g = Generator::new(c.clone()).unwrap();
        let later: Vec<_> = g.dates().collect::<Vec<_>>().into_iter().rev().map(|d| g.day(d)).collect();
        let mut forward: Vec<_> = g.days().map(|(_, r)| r).collect();
        forward.reverse();
        assert_eq!(later, forward);
        let other = generate_stream(&GeneratorConfig { seed: 12, ..c }).unwrap();
        assert_ne!(other.records, generate_stream(&short(6, vec![])).unwrap().records);
    }

    #[test]
    fn merged_weighted_degrees_look_scale_free() {
        let g = Generator::new(short(60, vec![])).unwrap();
        let graphs: Vec<_> = g.days().map(|(_, r)| build_graph(&r).unwrap().graph).collect();
        let merged = merge_slices(&graphs);
        let mut degrees = degree_sequence(&merged, DegreeKind::WeightedTotal);
        degrees.sort_unstable();
        let kmin = degrees[degrees.len() / 2];
        let alpha = fit_power_law(&degrees, kmin).unwrap();
        assert!((1.5..=4.0).contains(&alpha), "alpha {alpha}");
    }
}
