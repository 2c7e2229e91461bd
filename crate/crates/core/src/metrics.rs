//! Macro properties of a daily graph: size, edge count, hop distance, density.

use std::collections::VecDeque;
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::MetricSeries;
use crate::graph::{build_graph, iter_bits, DailyGraph, GraphError, Period};
use crate::ingest::DailySliceSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("degenerate graph: {0} node(s), need at least 2")]
    Degenerate(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Reachable ordered pairs and their summed hop counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DistanceTally {
    pub reachable_pairs: u64,
    pub total_hops: u64,
}

impl DistanceTally {
    /// Mean hops over reachable pairs, `None` if nothing is reachable.
    pub fn mean(self) -> Option<f64> {
        (self.reachable_pairs > 0).then(|| self.total_hops as f64 / self.reachable_pairs as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroMetrics {
    pub period: Period,
    pub node_count: usize,
    pub edge_count: usize,
    /// Mean directed hop count over reachable ordered pairs. Unreachable
    /// pairs are left out; `None` when no pair is reachable.
    pub average_distance: Option<f64>,
    pub density: f64,
    pub distances: DistanceTally,
}

impl MacroMetrics {
    pub fn date(&self) -> Option<NaiveDate> {
        self.period.date()
    }
}

/// Node count, edge count, average hop distance and `m / (n (n - 1))`.
pub fn compute_macro_metrics(graph: &DailyGraph) -> Result<MacroMetrics, MetricsError> {
    let n = graph.node_count();
    if n < 2 {
        return Err(MetricsError::Degenerate(n));
    }
    let m = graph.edge_count();
    let distances = distance_tally(graph);
    Ok(MacroMetrics {
        period: graph.period(),
        node_count: n,
        edge_count: m,
        average_distance: distances.mean(),
        density: m as f64 / (n as f64 * (n as f64 - 1.0)),
        distances,
    })
}

/// All-pairs unweighted BFS.
pub fn distance_tally(graph: &DailyGraph) -> DistanceTally {
    let n = graph.node_count();
    // Frontier-at-a-time bitset BFS costs ~n^3/64 word ops, queue BFS ~n*m.
    if n <= 4096 && (graph.edge_count() as u64) * 64 >= (n as u64) * (n as u64) {
        bitset_distances(graph)
    } else {
        queue_distances(graph)
    }
}

fn bitset_distances(graph: &DailyGraph) -> DistanceTally {
    let n = graph.node_count();
    let adj = graph.out_bits();
    let words = adj.words();
    let mut tally = DistanceTally::default();
    let mut visited = vec![0u64; words];
    let mut frontier = vec![0u64; words];
    let mut next = vec![0u64; words];
    for source in 0..n {
        visited.fill(0);
        frontier.fill(0);
        visited[source / 64] |= 1 << (source % 64);
        frontier[source / 64] |= 1 << (source % 64);
        let mut depth = 0u64;
        loop {
            next.fill(0);
            for v in iter_bits(&frontier) {
                for (acc, w) in next.iter_mut().zip(adj.row(v)) {
                    *acc |= w;
                }
            }
            let mut found = 0u64;
            for (acc, seen) in next.iter_mut().zip(visited.iter_mut()) {
                *acc &= !*seen;
                *seen |= *acc;
                found += acc.count_ones() as u64;
            }
            if found == 0 {
                break;
            }
            depth += 1;
            tally.reachable_pairs += found;
            tally.total_hops += found * depth;
            std::mem::swap(&mut frontier, &mut next);
        }
    }
    tally
}

fn queue_distances(graph: &DailyGraph) -> DistanceTally {
    let n = graph.node_count();
    let mut tally = DistanceTally::default();
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::with_capacity(n);
    for source in 0..n as u32 {
        dist.fill(u32::MAX);
        dist[source as usize] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let d = dist[v as usize];
            for e in graph.out_edges(v) {
                let t = e.target as usize;
                if dist[t] == u32::MAX {
                    dist[t] = d + 1;
                    tally.reachable_pairs += 1;
                    tally.total_hops += u64::from(d + 1);
                    queue.push_back(e.target);
                }
            }
        }
    }
    tally
}

/// A day that produced no measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DayGap {
    pub date: NaiveDate,
    pub reason: String,
}

/// Per-day macro metrics and the four series derived from them.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub days: Vec<MacroMetrics>,
    pub gaps: Vec<DayGap>,
}

impl MetricsReport {
    /// Assembles a report from per-day results in chronological order.
    pub fn from_results(results: impl IntoIterator<Item = (NaiveDate, Result<MacroMetrics, MetricsError>)>) -> Self {
        let mut report = MetricsReport::default();
        for (date, result) in results {
            match result {
                Ok(m) => report.days.push(m),
                Err(e) => report.gaps.push(DayGap {
                    date,
                    reason: e.to_string(),
                }),
            }
        }
        report
    }

    fn series(&self, name: &str, value: impl Fn(&MacroMetrics) -> Option<f64>) -> MetricSeries {
        let points = self
            .days
            .iter()
            .filter_map(|m| Some((m.date()?, value(m)?)))
            .collect();
        MetricSeries::new(name, points).expect("days are chronological")
    }

    pub fn nodes(&self) -> MetricSeries {
        self.series("nodes", |m| Some(m.node_count as f64))
    }

    pub fn edges(&self) -> MetricSeries {
        self.series("edges", |m| Some(m.edge_count as f64))
    }

    /// Days with no reachable pair are absent.
    pub fn distance(&self) -> MetricSeries {
        self.series("avg_distance", |m| m.average_distance)
    }

    pub fn density(&self) -> MetricSeries {
        self.series("density", |m| Some(m.density))
    }

    pub fn all_series(&self) -> [MetricSeries; 4] {
        [self.nodes(), self.edges(), self.distance(), self.density()]
    }

    /// `date,nodes,edges,avg_distance,density`; an undefined distance is an
    /// empty field.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["date", "nodes", "edges", "avg_distance", "density"])?;
        for m in &self.days {
            out.write_record([
                m.period.to_string(),
                m.node_count.to_string(),
                m.edge_count.to_string(),
                m.average_distance.map(|d| d.to_string()).unwrap_or_default(),
                m.density.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds each day's graph and measures it. Per-day failures become gaps.
pub fn metrics_series(slices: &DailySliceSet) -> MetricsReport {
    let days: Vec<_> = slices.iter().collect();
    let results: Vec<_> = days
        .par_iter()
        .map(|&(date, records)| {
            let result = build_graph(records)
                .map_err(MetricsError::from)
                .and_then(|built| compute_macro_metrics(&built.graph));
            (date, result)
        })
        .collect();
    MetricsReport::from_results(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::ingest::TransactionRecord;
    use proptest::prelude::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2006, 10, 5).unwrap()
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> DailyGraph {
        let mut b = GraphBuilder::new(Period::Day(day()));
        for i in 0..n {
            b.add_node(&format!("v{i:03}"));
        }
        for &(s, t) in edges {
            b.add_edge(&format!("v{s:03}"), &format!("v{t:03}"), 1).unwrap();
        }
        b.build()
    }

    /// Floyd–Warshall over hop counts.
    fn oracle(g: &DailyGraph) -> DistanceTally {
        let n = g.node_count();
        const INF: u64 = u64::MAX / 4;
        let mut d = vec![vec![INF; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for e in g.edges() {
            d[e.source as usize][e.target as usize] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        let mut t = DistanceTally::default();
        for (i, row) in d.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if i != j && x < INF {
                    t.reachable_pairs += 1;
                    t.total_hops += x;
                }
            }
        }
        t
    }

    #[test]
    fn table2_first_day_metrics() {
        let m = compute_macro_metrics(&graph(3, &[(0, 1), (2, 1)])).unwrap();
        assert_eq!((m.node_count, m.edge_count), (3, 2));
        assert_eq!(m.density, 2.0 / 6.0);
        assert_eq!(m.average_distance, Some(1.0));
    }

    #[test]
    fn three_cycle_metrics() {
        let m = compute_macro_metrics(&graph(3, &[(0, 1), (1, 2), (2, 0)])).unwrap();
        assert_eq!(m.density, 0.5);
        assert_eq!(m.average_distance, Some(1.5));
    }

    #[test]
    fn paper_scale_density() {
        let n = 143;
        let edges: Vec<_> = (0..n)
            .flat_map(|s| (0..n).map(move |t| (s, t)))
            .filter(|(s, t)| s != t)
            .take(4812)
            .collect();
        let m = compute_macro_metrics(&graph(n, &edges)).unwrap();
        assert_eq!(m.edge_count, 4812);
        assert!((m.density - 0.2370).abs() < 1e-4);
    }

    #[test]
    fn degenerate_and_unreachable() {
        assert_eq!(compute_macro_metrics(&graph(1, &[])).unwrap_err(), MetricsError::Degenerate(1));
        let m = compute_macro_metrics(&graph(4, &[])).unwrap();
        assert_eq!(m.average_distance, None);
        assert_eq!(m.density, 0.0);
    }

    #[test]
    fn both_bfs_paths_match_on_a_path_graph() {
        let g = graph(70, &(0..69).map(|i| (i, i + 1)).collect::<Vec<_>>());
        assert_eq!(bitset_distances(&g), queue_distances(&g));
        assert_eq!(bitset_distances(&g), oracle(&g));
    }

    #[test]
    fn series_from_slices() {
        let d0 = day();
        let mut slices = DailySliceSet::new();
        for k in 0..3 {
            let date = d0 + chrono::Days::new(k);
            for (o, t) in [("A", "B"), ("B", "C")] {
                slices.push(TransactionRecord::new(date, o, t, 2).unwrap());
            }
        }
        // a day with only a self-transfer has no graph to measure
        slices.push(TransactionRecord::new(d0 + chrono::Days::new(9), "Z", "Z", 1).unwrap());
        let report = metrics_series(&slices);
        assert_eq!(report.days.len(), 3);
        assert_eq!(report.gaps.len(), 1);
        let nodes = report.nodes();
        assert_eq!(nodes.values().collect::<Vec<_>>(), vec![3.0; 3]);
        assert!(report.distance().values().all(|v| v == 4.0 / 3.0));

        let empty = metrics_series(&DailySliceSet::new());
        assert!(empty.all_series().iter().all(|s| s.is_empty()));
    }

    #[test]
    fn csv_leaves_undefined_distance_empty() {
        let report = MetricsReport::from_results([
            (day(), compute_macro_metrics(&graph(2, &[])) ),
        ]);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "date,nodes,edges,avg_distance,density\n2006-10-05,2,0,,0\n"
        );
    }

    fn arb_edges(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2..=max_n).prop_flat_map(|n| {
            (Just(n), prop::collection::vec((0..n, 0..n), 0..n * n))
                .prop_map(|(n, es)| (n, es.into_iter().filter(|(a, b)| a != b).collect()))
        })
    }

    proptest! {
        #[test]
        fn bfs_equals_floyd_warshall((n, edges) in arb_edges(20)) {
            let g = graph(n, &edges);
            let want = oracle(&g);
            prop_assert_eq!(bitset_distances(&g), want);
            prop_assert_eq!(queue_distances(&g), want);
        }

        #[test]
        fn density_bounds((n, edges) in arb_edges(15)) {
            let m = compute_macro_metrics(&graph(n, &edges)).unwrap();
            prop_assert!((0.0..=1.0).contains(&m.density));
            if m.edge_count > 0 {
                prop_assert!(m.density > 0.0);
                prop_assert!(m.average_distance.unwrap() >= 1.0);
            }
        }

        #[test]
        fn adding_an_edge_is_monotone((n, edges) in arb_edges(12), extra in (0usize..12, 0usize..12)) {
            let (s, t) = (extra.0 % n, extra.1 % n);
            prop_assume!(s != t);
            let before = compute_macro_metrics(&graph(n, &edges)).unwrap();
            let mut more = edges.clone();
            more.push((s, t));
            let after = compute_macro_metrics(&graph(n, &more)).unwrap();
            prop_assert!(after.density >= before.density);
            // Only meaningful when the reachable set does not grow; a new
            // pair can bring in long paths.
            if after.distances.reachable_pairs == before.distances.reachable_pairs {
                prop_assert!(after.distances.total_hops <= before.distances.total_hops);
            }
        }
    }
}
