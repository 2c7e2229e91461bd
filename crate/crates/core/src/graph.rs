//! Simple directed weighted graphs built from daily transaction slices.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TransactionRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("records span several dates ({first} and {other})")]
    MixedDates { first: NaiveDate, other: NaiveDate },
    #[error("no records to build a graph from")]
    EmptySlice,
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("edge weight overflow on {0} -> {1}")]
    WeightOverflow(String, String),
    #[error("kmin must be at least 1")]
    InvalidKmin,
    #[error("need at least 2 samples >= kmin, found {0}")]
    TooFewSamples(usize),
    #[error("degenerate sample: every value equals kmin")]
    DegenerateSample,
}

/// The days a graph covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Period {
    Day(NaiveDate),
    Range { first: NaiveDate, last: NaiveDate },
    /// A merge of zero graphs.
    Empty,
}

impl Period {
    pub fn bounds(self) -> Option<(NaiveDate, NaiveDate)> {
        match self {
            Period::Day(d) => Some((d, d)),
            Period::Range { first, last } => Some((first, last)),
            Period::Empty => None,
        }
    }

    pub fn date(self) -> Option<NaiveDate> {
        match self {
            Period::Day(d) => Some(d),
            _ => None,
        }
    }

    fn union(self, other: Period) -> Period {
        match (self.bounds(), other.bounds()) {
            (None, _) => other,
            (_, None) => self,
            (Some((a0, a1)), Some((b0, b1))) => {
                let (first, last) = (a0.min(b0), a1.max(b1));
                if first == last {
                    Period::Day(first)
                } else {
                    Period::Range { first, last }
                }
            }
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Day(d) => write!(f, "{d}"),
            Period::Range { first, last } => write!(f, "{first}..{last}"),
            Period::Empty => f.write_str("empty"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub source: u32,
    pub target: u32,
    pub weight: u64,
}

/// A simple directed graph with positive integer weights and no self-loops.
///
/// Nodes are kept in label order and addressed by `u32` index. Edges are
/// stored sorted by `(source, target)`, with offset tables for out- and
/// in-adjacency. Two graphs with the same period, node set and weighted
/// edge map compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyGraph {
    period: Period,
    labels: Vec<String>,
    edges: Vec<Edge>,
    out_offsets: Vec<usize>,
    in_offsets: Vec<usize>,
    /// Edge ids grouped by target, sources ascending within a group.
    in_edges: Vec<u32>,
}

impl DailyGraph {
    pub fn period(&self) -> Period {
        self.period
    }

    /// The calendar day, for single-day graphs.
    pub fn date(&self) -> Option<NaiveDate> {
        self.period.date()
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, node: u32) -> &str {
        &self.labels[node as usize]
    }

    pub fn node_index(&self, label: &str) -> Option<u32> {
        self.labels
            .binary_search_by(|l| l.as_str().cmp(label))
            .ok()
            .map(|i| i as u32)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, node: u32) -> &[Edge] {
        let v = node as usize;
        &self.edges[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    pub fn in_edges(&self, node: u32) -> impl ExactSizeIterator<Item = &Edge> + '_ {
        let v = node as usize;
        self.in_edges[self.in_offsets[v]..self.in_offsets[v + 1]]
            .iter()
            .map(move |&e| &self.edges[e as usize])
    }

    pub fn out_degree(&self, node: u32) -> usize {
        let v = node as usize;
        self.out_offsets[v + 1] - self.out_offsets[v]
    }

    pub fn in_degree(&self, node: u32) -> usize {
        let v = node as usize;
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    pub fn has_edge(&self, source: u32, target: u32) -> bool {
        self.out_edges(source)
            .binary_search_by_key(&target, |e| e.target)
            .is_ok()
    }

    pub fn weight(&self, origin: &str, destination: &str) -> Option<u64> {
        let s = self.node_index(origin)?;
        let t = self.node_index(destination)?;
        let out = self.out_edges(s);
        out.binary_search_by_key(&t, |e| e.target)
            .ok()
            .map(|i| out[i].weight)
    }

    /// Sum of all edge weights, saturating at `u64::MAX`.
    pub fn total_weight(&self) -> u64 {
        self.edges
            .iter()
            .fold(0u64, |acc, e| acc.saturating_add(e.weight))
    }

    /// `(origin, destination) -> weight`, keyed by label.
    pub fn edge_map(&self) -> BTreeMap<(&str, &str), u64> {
        self.edges
            .iter()
            .map(|e| ((self.label(e.source), self.label(e.target)), e.weight))
            .collect()
    }

    pub(crate) fn out_bits(&self) -> BitMatrix {
        let mut m = BitMatrix::new(self.node_count());
        for e in &self.edges {
            m.insert(e.source as usize, e.target as usize);
        }
        m
    }
}

/// Accumulates labelled nodes and weighted edges into a [`DailyGraph`].
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    period: Period,
    index: HashMap<String, u32>,
    labels: Vec<String>,
    weights: HashMap<(u32, u32), u64>,
}

impl GraphBuilder {
    pub fn new(period: Period) -> Self {
        GraphBuilder {
            period,
            index: HashMap::new(),
            labels: Vec::new(),
            weights: HashMap::new(),
        }
    }

    fn intern(&mut self, label: &str) -> u32 {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        i
    }

    pub fn add_node(&mut self, label: &str) -> &mut Self {
        self.intern(label);
        self
    }

    /// Adds `weight` to the edge `source -> target`, creating it if absent.
    pub fn add_edge(&mut self, source: &str, target: &str, weight: u64) -> Result<&mut Self, GraphError> {
        if source == target {
            return Err(GraphError::SelfLoop(source.to_string()));
        }
        let s = self.intern(source);
        let t = self.intern(target);
        let slot = self.weights.entry((s, t)).or_insert(0);
        *slot = slot
            .checked_add(weight)
            .ok_or_else(|| GraphError::WeightOverflow(source.to_string(), target.to_string()))?;
        Ok(self)
    }

    fn add_edge_saturating(&mut self, source: &str, target: &str, weight: u64) {
        let s = self.intern(source);
        let t = self.intern(target);
        let slot = self.weights.entry((s, t)).or_insert(0);
        *slot = slot.saturating_add(weight);
    }

    pub fn build(self) -> DailyGraph {
        let n = self.labels.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_unstable_by(|&a, &b| self.labels[a as usize].cmp(&self.labels[b as usize]));
        let mut rank = vec![0u32; n];
        for (new, &old) in order.iter().enumerate() {
            rank[old as usize] = new as u32;
        }
        let mut labels = self.labels;
        let mut sorted_labels = Vec::with_capacity(n);
        for &old in &order {
            sorted_labels.push(std::mem::take(&mut labels[old as usize]));
        }

        let mut edges: Vec<Edge> = self
            .weights
            .into_iter()
            .filter(|&(_, w)| w > 0)
            .map(|((s, t), weight)| Edge {
                source: rank[s as usize],
                target: rank[t as usize],
                weight,
            })
            .collect();
        edges.sort_unstable_by_key(|e| (e.source, e.target));
        DailyGraph::from_sorted_parts(self.period, sorted_labels, edges)
    }
}

impl DailyGraph {
    /// `labels` sorted and unique; `edges` sorted by `(source, target)`,
    /// unique, positive weights, no self-loops.
    fn from_sorted_parts(period: Period, labels: Vec<String>, edges: Vec<Edge>) -> DailyGraph {
        let n = labels.len();
        let mut out_offsets = vec![0usize; n + 1];
        let mut in_offsets = vec![0usize; n + 1];
        for e in &edges {
            out_offsets[e.source as usize + 1] += 1;
            in_offsets[e.target as usize + 1] += 1;
        }
        for v in 0..n {
            out_offsets[v + 1] += out_offsets[v];
            in_offsets[v + 1] += in_offsets[v];
        }
        let mut cursor = in_offsets.clone();
        let mut in_edges = vec![0u32; edges.len()];
        for (id, e) in edges.iter().enumerate() {
            let slot = &mut cursor[e.target as usize];
            in_edges[*slot] = id as u32;
            *slot += 1;
        }

        DailyGraph {
            period,
            labels,
            edges,
            out_offsets,
            in_offsets,
            in_edges,
        }
    }
}

/// A graph plus the self-transfers dropped while building it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltGraph {
    pub graph: DailyGraph,
    pub self_loop_records: usize,
    pub self_loop_value: u64,
}

/// Aggregates one day of records into a simple directed graph.
///
/// Repeated `(origin, destination)` pairs are summed. Self-transfers are
/// dropped and tallied; their banks only appear as nodes if they also have
/// a retained edge.
pub fn build_graph(records: &[TransactionRecord]) -> Result<BuiltGraph, GraphError> {
    let first = records.first().ok_or(GraphError::EmptySlice)?.date();
    let mut self_loop_records = 0;
    let mut self_loop_value = 0u64;
    let mut index: HashMap<&str, u32, BuildHasherDefault<Fnv>> = HashMap::default();
    let mut labels: Vec<&str> = Vec::new();
    let mut raw: Vec<Edge> = Vec::with_capacity(records.len());
    let mut intern = |label| {
        *index.entry(label).or_insert_with(|| {
            labels.push(label);
            labels.len() as u32 - 1
        })
    };
    for r in records {
        if r.date() != first {
            return Err(GraphError::MixedDates {
                first,
                other: r.date(),
            });
        }
        if r.is_self_loop() {
            self_loop_records += 1;
            self_loop_value = self_loop_value.saturating_add(r.value());
        } else {
            raw.push(Edge {
                source: intern(r.origin()),
                target: intern(r.destination()),
                weight: r.value(),
            });
        }
    }
    let mut order: Vec<u32> = (0..labels.len() as u32).collect();
    order.sort_unstable_by_key(|&i| labels[i as usize]);
    let mut rank = vec![0u32; labels.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old as usize] = new as u32;
    }
    for e in &mut raw {
        e.source = rank[e.source as usize];
        e.target = rank[e.target as usize];
    }
    let labels: Vec<&str> = order.iter().map(|&i| labels[i as usize]).collect();

    // Counting sort by source, then a short sort per source.
    let mut starts = vec![0usize; labels.len() + 1];
    for e in &raw {
        starts[e.source as usize + 1] += 1;
    }
    for v in 0..labels.len() {
        starts[v + 1] += starts[v];
    }
    let mut cursor = starts.clone();
    let mut sorted = vec![Edge { source: 0, target: 0, weight: 0 }; raw.len()];
    for e in raw {
        let slot = &mut cursor[e.source as usize];
        sorted[*slot] = e;
        *slot += 1;
    }
    for w in starts.windows(2) {
        sorted[w[0]..w[1]].sort_unstable_by_key(|e| e.target);
    }
    let mut edges: Vec<Edge> = Vec::with_capacity(sorted.len());
    for e in sorted {
        match edges.last_mut() {
            Some(last) if (last.source, last.target) == (e.source, e.target) => {
                last.weight = last.weight.checked_add(e.weight).ok_or_else(|| {
                    GraphError::WeightOverflow(labels[e.source as usize].to_string(), labels[e.target as usize].to_string())
                })?;
            }
            _ => edges.push(e),
        }
    }
    let labels = labels.into_iter().map(str::to_string).collect();
    Ok(BuiltGraph {
        graph: DailyGraph::from_sorted_parts(Period::Day(first), labels, edges),
        self_loop_records,
        self_loop_value,
    })
}

/// FNV-1a, cheap for short bank identifiers.
#[derive(Default)]
struct Fnv(u64);

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        let mut h = if self.0 == 0 { 0xcbf2_9ce4_8422_2325 } else { self.0 };
        for &b in bytes {
            h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
        self.0 = h;
    }
}

/// Unions node sets and sums edge weights across graphs.
///
/// Weights saturate at `u64::MAX` rather than failing.
pub fn merge_slices(graphs: &[DailyGraph]) -> DailyGraph {
    let period = graphs
        .iter()
        .fold(Period::Empty, |acc, g| acc.union(g.period));
    let mut builder = GraphBuilder::new(period);
    for g in graphs {
        for label in &g.labels {
            builder.add_node(label);
        }
        for e in &g.edges {
            builder.add_edge_saturating(g.label(e.source), g.label(e.target), e.weight);
        }
    }
    builder.build()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeKind {
    In,
    Out,
    Total,
    WeightedIn,
    WeightedOut,
    WeightedTotal,
}

impl DegreeKind {
    pub const ALL: [DegreeKind; 6] = [
        DegreeKind::In,
        DegreeKind::Out,
        DegreeKind::Total,
        DegreeKind::WeightedIn,
        DegreeKind::WeightedOut,
        DegreeKind::WeightedTotal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DegreeKind::In => "in",
            DegreeKind::Out => "out",
            DegreeKind::Total => "total",
            DegreeKind::WeightedIn => "weighted-in",
            DegreeKind::WeightedOut => "weighted-out",
            DegreeKind::WeightedTotal => "weighted-total",
        }
    }
}

impl fmt::Display for DegreeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DegreeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DegreeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown degree kind `{s}`"))
    }
}

/// Degree of every node, in node-index order.
pub fn degree_sequence(graph: &DailyGraph, kind: DegreeKind) -> Vec<u64> {
    let n = graph.node_count();
    let mut out = vec![0u64; n];
    let mut inn = vec![0u64; n];
    let weighted = matches!(
        kind,
        DegreeKind::WeightedIn | DegreeKind::WeightedOut | DegreeKind::WeightedTotal
    );
    for e in graph.edges() {
        let w = if weighted { e.weight } else { 1 };
        out[e.source as usize] = out[e.source as usize].saturating_add(w);
        inn[e.target as usize] = inn[e.target as usize].saturating_add(w);
    }
    match kind {
        DegreeKind::In | DegreeKind::WeightedIn => inn,
        DegreeKind::Out | DegreeKind::WeightedOut => out,
        DegreeKind::Total | DegreeKind::WeightedTotal => {
            out.iter().zip(&inn).map(|(a, b)| a.saturating_add(*b)).collect()
        }
    }
}

/// Histogram of degree value to number of nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeDistribution {
    pub kind: DegreeKind,
    pub histogram: BTreeMap<u64, u64>,
}

impl DegreeDistribution {
    pub fn node_count(&self) -> u64 {
        self.histogram.values().sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["degree", "count"])?;
        for (degree, count) in &self.histogram {
            out.write_record([degree.to_string(), count.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn degree_distribution(graph: &DailyGraph, kind: DegreeKind) -> Result<DegreeDistribution, GraphError> {
    if graph.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let mut histogram = BTreeMap::new();
    for d in degree_sequence(graph, kind) {
        *histogram.entry(d).or_insert(0) += 1;
    }
    Ok(DegreeDistribution { kind, histogram })
}

/// Discrete power-law exponent by the shifted-continuum maximum likelihood
/// approximation
///
/// `alpha = 1 + n / sum(ln(k_i / (kmin - 0.5)))`
///
/// over the `n` samples with `k_i >= kmin`. The approximation is biased low
/// for small `kmin`; it is reliable from roughly `kmin >= 6`.
pub fn fit_power_law(degrees: &[u64], kmin: u64) -> Result<f64, GraphError> {
    if kmin == 0 {
        return Err(GraphError::InvalidKmin);
    }
    let shift = kmin as f64 - 0.5;
    let mut n = 0usize;
    let mut log_sum = 0.0;
    let mut all_at_kmin = true;
    for &k in degrees.iter().filter(|&&k| k >= kmin) {
        n += 1;
        log_sum += (k as f64 / shift).ln();
        all_at_kmin &= k == kmin;
    }
    if n < 2 {
        return Err(GraphError::TooFewSamples(n));
    }
    if all_at_kmin {
        return Err(GraphError::DegenerateSample);
    }
    Ok(1.0 + n as f64 / log_sum)
}

/// Writes `origin,destination,weight` rows in edge order.
pub fn write_edge_list<W: Write>(graph: &DailyGraph, writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["origin", "destination", "weight"])?;
    for e in graph.edges() {
        out.write_record([
            graph.label(e.source),
            graph.label(e.target),
            e.weight.to_string().as_str(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Row-major adjacency bit matrix.
#[derive(Debug, Clone)]
pub(crate) struct BitMatrix {
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub(crate) fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        BitMatrix {
            words,
            bits: vec![0; words * n],
        }
    }

    #[inline]
    pub(crate) fn words(&self) -> usize {
        self.words
    }

    #[inline]
    pub(crate) fn insert(&mut self, row: usize, col: usize) {
        self.bits[row * self.words + col / 64] |= 1u64 << (col % 64);
    }

    #[cfg(test)]
    pub(crate) fn contains(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.words + col / 64] >> (col % 64) & 1 == 1
    }

    #[inline]
    pub(crate) fn row(&self, row: usize) -> &[u64] {
        &self.bits[row * self.words..(row + 1) * self.words]
    }

    /// Transpose, for in-adjacency.
    pub(crate) fn transpose(&self, n: usize) -> BitMatrix {
        let mut t = BitMatrix::new(n);
        for r in 0..n {
            for c in iter_bits(self.row(r)) {
                t.insert(c, r);
            }
        }
        t
    }
}

/// Indices of set bits, ascending.
pub(crate) fn iter_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(i, &w)| {
        let mut w = w;
        std::iter::from_fn(move || {
            if w == 0 {
                return None;
            }
            let b = w.trailing_zeros() as usize;
            w &= w - 1;
            Some(i * 64 + b)
        })
    })
}
