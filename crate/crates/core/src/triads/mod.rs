//! The 16-class directed triad census.
//!
//! Classes follow the usual MAN naming (mutual, asymmetric, null dyad
//! counts plus an orientation letter) in the order 003, 012, 102, 021D,
//! 021U, 021C, 111D, 111U, 030T, 030C, 201, 120D, 120U, 120C, 210, 300, and
//! are numbered 1 to 16 in that order.

mod dense;
mod sparse;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::MetricSeries;
use crate::graph::{build_graph, DailyGraph, GraphError, Period};
use crate::ingest::DailySliceSet;
use crate::metrics::DayGap;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TriadError {
    #[error("triad census needs at least 3 nodes, graph has {0}")]
    TooFewNodes(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TriadClass {
    T003,
    T012,
    T102,
    T021D,
    T021U,
    T021C,
    T111D,
    T111U,
    T030T,
    T030C,
    T201,
    T120D,
    T120U,
    T120C,
    T210,
    T300,
}

impl TriadClass {
    pub const ALL: [TriadClass; 16] = [
        TriadClass::T003,
        TriadClass::T012,
        TriadClass::T102,
        TriadClass::T021D,
        TriadClass::T021U,
        TriadClass::T021C,
        TriadClass::T111D,
        TriadClass::T111U,
        TriadClass::T030T,
        TriadClass::T030C,
        TriadClass::T201,
        TriadClass::T120D,
        TriadClass::T120U,
        TriadClass::T120C,
        TriadClass::T210,
        TriadClass::T300,
    ];

    /// Pattern number, 1..=16.
    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn from_index(index: usize) -> Option<Self> {
        index.checked_sub(1).and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn code(self) -> &'static str {
        const CODES: [&str; 16] = [
            "003", "012", "102", "021D", "021U", "021C", "111D", "111U", "030T", "030C", "201", "120D", "120U",
            "120C", "210", "300",
        ];
        CODES[self as usize]
    }

    /// `(mutual, asymmetric, null)` dyad counts.
    pub fn man(self) -> (u64, u64, u64) {
        use TriadClass::*;
        match self {
            T003 => (0, 0, 3),
            T012 => (0, 1, 2),
            T102 => (1, 0, 2),
            T021D | T021U | T021C => (0, 2, 1),
            T111D | T111U => (1, 1, 1),
            T030T | T030C => (0, 3, 0),
            T201 => (2, 0, 1),
            T120D | T120U | T120C => (1, 2, 0),
            T210 => (2, 1, 0),
            T300 => (3, 0, 0),
        }
    }

    /// Whether the triad has a mutual dyad.
    pub fn has_mutual(self) -> bool {
        self.man().0 > 0
    }

    /// Class of a 6-bit adjacency code over nodes `(v, u, w)`:
    /// bit 0 `v->u`, 1 `u->v`, 2 `v->w`, 3 `w->v`, 4 `u->w`, 5 `w->u`.
    pub fn from_code(code: u8) -> TriadClass {
        class_table()[(code & 63) as usize]
    }
}

impl fmt::Display for TriadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TriadClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TriadClass::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown triad class `{s}`"))
    }
}

pub(crate) fn class_table() -> &'static [TriadClass; 64] {
    static TABLE: OnceLock<[TriadClass; 64]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [TriadClass::T003; 64];
        for (code, slot) in table.iter_mut().enumerate() {
            *slot = classify_triad(&adjacency_of_code(code as u8));
        }
        table
    })
}

pub(crate) fn adjacency_of_code(code: u8) -> [[bool; 3]; 3] {
    let bit = |b: u8| code >> b & 1 == 1;
    let mut adj = [[false; 3]; 3];
    adj[0][1] = bit(0);
    adj[1][0] = bit(1);
    adj[0][2] = bit(2);
    adj[2][0] = bit(3);
    adj[1][2] = bit(4);
    adj[2][1] = bit(5);
    adj
}

/// Isomorphism class of three labelled nodes; `adj[a][b]` is the edge
/// `a -> b`. The diagonal and weights play no part.
pub fn classify_triad(adj: &[[bool; 3]; 3]) -> TriadClass {
    use TriadClass::*;
    let edge = |a: usize, b: usize| a != b && adj[a][b];
    let out_deg = |v: usize| (0..3).filter(|&w| edge(v, w)).count();
    let in_deg = |v: usize| (0..3).filter(|&w| edge(w, v)).count();
    let mut mutual_pair = None;
    let (mut mutual, mut asym) = (0, 0);
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        match (edge(a, b), edge(b, a)) {
            (true, true) => {
                mutual += 1;
                mutual_pair = Some((a, b));
            }
            (true, false) | (false, true) => asym += 1,
            (false, false) => {}
        }
    }
    match (mutual, asym) {
        (0, 0) => T003,
        (0, 1) => T012,
        (1, 0) => T102,
        (0, 2) => {
            if (0..3).any(|v| out_deg(v) == 2) {
                T021D
            } else if (0..3).any(|v| in_deg(v) == 2) {
                T021U
            } else {
                T021C
            }
        }
        (1, 1) => {
            let (a, b) = mutual_pair.expect("one mutual dyad");
            let third = 3 - a - b;
            // The lone asymmetric edge either enters the mutual pair or leaves it.
            if edge(third, a) || edge(third, b) {
                T111D
            } else {
                T111U
            }
        }
        (0, 3) => {
            if (0..3).any(|v| out_deg(v) == 2) {
                T030T
            } else {
                T030C
            }
        }
        (2, 0) => T201,
        (1, 2) => {
            let (a, b) = mutual_pair.expect("one mutual dyad");
            let third = 3 - a - b;
            match (edge(third, a), edge(third, b)) {
                (true, true) => T120D,
                (false, false) => T120U,
                _ => T120C,
            }
        }
        (2, 1) => T210,
        (3, 0) => T300,
        _ => unreachable!("three dyads in a triad"),
    }
}

/// Counts of all 16 classes over every unordered node triple of one graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TriadCensus {
    pub period: Period,
    pub counts: [u64; 16],
}

impl TriadCensus {
    pub fn get(&self, class: TriadClass) -> u64 {
        self.counts[class as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn date(&self) -> Option<NaiveDate> {
        self.period.date()
    }
}

/// `C(n, 3)`.
pub fn triple_count(n: usize) -> u64 {
    let n = n as u64;
    if n < 3 {
        0
    } else {
        n * (n - 1) / 2 * (n - 2) / 3
    }
}

/// Implementation used by [`triad_census_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CensusAlgorithm {
    /// Bitset for graphs up to [`DENSE_NODE_LIMIT`] nodes, neighbour lists beyond.
    #[default]
    Auto,
    /// Adjacency bit rows; memory grows as `n^2 / 2` bits.
    Bitset,
    /// Batagelj–Mrvar neighbourhood iteration over sorted adjacency lists.
    NeighborIterator,
}

/// Largest node count the bitset census is used for under `Auto`.
pub const DENSE_NODE_LIMIT: usize = 8192;

/// Exact census via neighbourhood iteration over linked node pairs; null,
/// single-edge and single-mutual triads come from dyad counts.
pub fn triad_census(graph: &DailyGraph) -> Result<TriadCensus, TriadError> {
    triad_census_with(graph, CensusAlgorithm::Auto)
}

pub fn triad_census_with(graph: &DailyGraph, algorithm: CensusAlgorithm) -> Result<TriadCensus, TriadError> {
    let n = graph.node_count();
    if n < 3 {
        return Err(TriadError::TooFewNodes(n));
    }
    let counts = match algorithm {
        CensusAlgorithm::Bitset => dense::census(graph),
        CensusAlgorithm::NeighborIterator => sparse::census(graph),
        CensusAlgorithm::Auto if n <= DENSE_NODE_LIMIT => dense::census(graph),
        CensusAlgorithm::Auto => sparse::census(graph),
    };
    assert_eq!(counts.iter().sum::<u64>(), triple_count(n), "census must cover every triple");
    Ok(TriadCensus {
        period: graph.period(),
        counts,
    })
}

/// Classifies every unordered triple one at a time. O(n^3); a test oracle.
pub fn brute_force_census(graph: &DailyGraph) -> Result<TriadCensus, TriadError> {
    let n = graph.node_count();
    if n < 3 {
        return Err(TriadError::TooFewNodes(n));
    }
    let mut counts = [0u64; 16];
    for i in 0..n as u32 {
        for j in i + 1..n as u32 {
            for k in j + 1..n as u32 {
                let nodes = [i, j, k];
                let mut adj = [[false; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        adj[a][b] = a != b && graph.has_edge(nodes[a], nodes[b]);
                    }
                }
                counts[classify_triad(&adj) as usize] += 1;
            }
        }
    }
    Ok(TriadCensus {
        period: graph.period(),
        counts,
    })
}

/// Per-day censuses and the 16 series derived from them.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CensusReport {
    pub days: Vec<TriadCensus>,
    pub gaps: Vec<DayGap>,
}

/// Column name of a class in census files: `c1`..`c16`.
pub fn column_name(class: TriadClass) -> String {
    format!("c{}", class.index())
}

impl CensusReport {
    pub fn from_results(results: impl IntoIterator<Item = (NaiveDate, Result<TriadCensus, TriadError>)>) -> Self {
        let mut report = CensusReport::default();
        for (date, result) in results {
            match result {
                Ok(c) => report.days.push(c),
                Err(e) => report.gaps.push(DayGap {
                    date,
                    reason: e.to_string(),
                }),
            }
        }
        report
    }

    pub fn series(&self, class: TriadClass) -> MetricSeries {
        let points = self
            .days
            .iter()
            .filter_map(|c| Some((c.date()?, c.get(class) as f64)))
            .collect();
        MetricSeries::new(column_name(class), points).expect("days are chronological")
    }

    pub fn all_series(&self) -> Vec<MetricSeries> {
        TriadClass::ALL.iter().map(|&c| self.series(c)).collect()
    }

    /// `date,c1,...,c16`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(TriadClass::ALL.iter().map(|&c| column_name(c)));
        out.write_record(&header)?;
        for c in &self.days {
            let mut row = vec![c.period.to_string()];
            row.extend(c.counts.iter().map(u64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `index,column,code` for the 16 classes.
pub fn write_class_sidecar<W: Write>(writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["index", "column", "code"])?;
    for c in TriadClass::ALL {
        out.write_record([c.index().to_string(), column_name(c), c.code().to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Builds each day's graph and takes its census. Per-day failures become gaps.
pub fn census_series(slices: &DailySliceSet) -> CensusReport {
    let days: Vec<_> = slices.iter().collect();
    let results: Vec<_> = days
        .par_iter()
        .map(|&(date, records)| {
            let result = build_graph(records)
                .map_err(TriadError::from)
                .and_then(|built| triad_census(&built.graph));
            (date, result)
        })
        .collect();
    CensusReport::from_results(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::ingest::TransactionRecord;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Class (0-based) per 6-bit code, as tabulated in widely used network
    /// libraries for the same bit layout.
    const REFERENCE_TABLE: [u8; 64] = [
        0, 1, 1, 2, 1, 3, 5, 7, 1, 5, 4, 6, 2, 7, 6, 10, 1, 5, 3, 7, 4, 8, 8, 12, 5, 9, 8, 13, 6, 13, 11, 14, 1, 4, 5,
        6, 5, 8, 9, 13, 3, 8, 8, 11, 7, 12, 13, 14, 2, 6, 7, 10, 6, 11, 13, 14, 7, 13, 12, 14, 10, 14, 14, 15,
    ];

    fn graph(n: usize, edges: &[(usize, usize)]) -> DailyGraph {
        let mut b = GraphBuilder::new(Period::Day(NaiveDate::from_ymd_opt(2014, 7, 30).unwrap()));
        for i in 0..n {
            b.add_node(&format!("n{i:04}"));
        }
        for &(s, t) in edges {
            b.add_edge(&format!("n{s:04}"), &format!("n{t:04}"), 1).unwrap();
        }
        b.build()
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> DailyGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for s in 0..n {
            for t in 0..n {
                if s != t && rng.random_bool(p) {
                    edges.push((s, t));
                }
            }
        }
        graph(n, &edges)
    }

    fn all_three(g: &DailyGraph) -> [TriadCensus; 3] {
        [
            triad_census_with(g, CensusAlgorithm::Bitset).unwrap(),
            triad_census_with(g, CensusAlgorithm::NeighborIterator).unwrap(),
            brute_force_census(g).unwrap(),
        ]
    }

    #[test]
    fn index_and_code_are_a_bijection() {
        for (i, c) in TriadClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i + 1);
            assert_eq!(TriadClass::from_index(i + 1), Some(*c));
            assert_eq!(c.code().parse::<TriadClass>().unwrap(), *c);
        }
        assert_eq!(TriadClass::from_index(16), Some(TriadClass::T300));
        assert_eq!(TriadClass::from_index(0), None);
        assert_eq!(TriadClass::from_index(17), None);
    }

    #[test]
    fn classifier_matches_reference_table() {
        for code in 0..64u8 {
            assert_eq!(
                TriadClass::from_code(code) as u8,
                REFERENCE_TABLE[code as usize],
                "code {code:06b}"
            );
        }
    }

    #[test]
    fn labelled_configurations_per_class() {
        // Number of the 64 labelled triads in each isomorphism class.
        let expected = [1, 6, 3, 3, 3, 6, 6, 6, 6, 2, 3, 3, 3, 6, 6, 1];
        let mut seen = [0; 16];
        for code in 0..64u8 {
            seen[TriadClass::from_code(code) as usize] += 1;
        }
        assert_eq!(seen, expected);
    }

    #[test]
    fn classifier_is_relabelling_invariant() {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for code in 0..64u8 {
            let adj = adjacency_of_code(code);
            let class = classify_triad(&adj);
            for p in perms {
                let mut moved = [[false; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        moved[p[a]][p[b]] = adj[a][b];
                    }
                }
                assert_eq!(classify_triad(&moved), class);
            }
        }
    }

    #[test]
    fn named_examples() {
        let mut adj = [[false; 3]; 3];
        assert_eq!(classify_triad(&adj), TriadClass::T003);
        adj[0][1] = true;
        assert_eq!(classify_triad(&adj), TriadClass::T012);
        adj[1][2] = true;
        adj[2][0] = true;
        assert_eq!(classify_triad(&adj), TriadClass::T030C);
        let full = [[true; 3]; 3];
        assert_eq!(classify_triad(&full), TriadClass::T300);
        assert_eq!(TriadClass::T300.index(), 16);
        // Diagonal entries are ignored.
        let mut diag = [[false; 3]; 3];
        diag[1][1] = true;
        assert_eq!(classify_triad(&diag), TriadClass::T003);
    }

    #[test]
    fn null_graph_of_five() {
        for c in all_three(&graph(5, &[])) {
            let mut want = [0; 16];
            want[0] = 10;
            assert_eq!(c.counts, want);
        }
    }

    #[test]
    fn reciprocal_triangle_and_k4() {
        let tri: Vec<_> = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).filter(|(a, b)| a != b).collect();
        for c in all_three(&graph(3, &tri)) {
            assert_eq!(c.get(TriadClass::T300), 1);
            assert_eq!(c.total(), 1);
        }
        let k4: Vec<_> = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).filter(|(a, b)| a != b).collect();
        for c in all_three(&graph(4, &k4)) {
            assert_eq!(c.get(TriadClass::T300), 4);
        }
        let mut empty3 = [0; 16];
        empty3[0] = 1;
        assert_eq!(brute_force_census(&graph(3, &[])).unwrap().counts, empty3);
    }

    #[test]
    fn too_few_nodes() {
        let g = graph(2, &[(0, 1)]);
        assert_eq!(triad_census(&g).unwrap_err(), TriadError::TooFewNodes(2));
        assert_eq!(brute_force_census(&g).unwrap_err(), TriadError::TooFewNodes(2));
    }

    #[test]
    fn seeded_random_n10_matches_brute_force() {
        let g = random_graph(10, 0.3, 2014);
        let [dense, sparse, brute] = all_three(&g);
        assert_eq!(dense, brute);
        assert_eq!(sparse, brute);
    }

    #[test]
    fn fifty_seeded_graphs_match_brute_force() {
        for seed in 0..50u64 {
            let n = 3 + (seed as usize % 10);
            let p = [0.1, 0.3, 0.6][seed as usize % 3];
            let g = random_graph(n, p, seed);
            let [dense, sparse, brute] = all_three(&g);
            assert_eq!(dense, brute, "seed {seed}");
            assert_eq!(sparse, brute, "seed {seed}");
        }
    }

    #[test]
    fn larger_graph_algorithms_agree() {
        // crosses 64-node word boundaries in the bitset path
        for (n, p, seed) in [(130, 0.05, 1), (200, 0.3, 2), (65, 0.9, 3)] {
            let g = random_graph(n, p, seed);
            let a = triad_census_with(&g, CensusAlgorithm::Bitset).unwrap();
            let b = triad_census_with(&g, CensusAlgorithm::NeighborIterator).unwrap();
            assert_eq!(a, b);
        }
        let g = random_graph(70, 0.2, 4);
        assert_eq!(triad_census(&g).unwrap(), brute_force_census(&g).unwrap());
    }

    #[test]
    fn series_from_slices() {
        let d0 = NaiveDate::from_ymd_opt(2014, 7, 1).unwrap();
        let mut slices = DailySliceSet::new();
        for k in 0..4 {
            let date = d0 + chrono::Days::new(k);
            for (o, t) in [("A", "B"), ("B", "A"), ("B", "C"), ("C", "D")] {
                slices.push(TransactionRecord::new(date, o, t, 1).unwrap());
            }
        }
        slices.push(TransactionRecord::new(d0 + chrono::Days::new(20), "A", "B", 1).unwrap());
        let report = census_series(&slices);
        assert_eq!(report.days.len(), 4);
        assert_eq!(report.gaps.len(), 1);
        let all = report.all_series();
        assert_eq!(all.len(), 16);
        for s in &all {
            assert_eq!(s.len(), 4);
            let first = s.values().next().unwrap();
            assert!(s.values().all(|v| v == first));
        }

        let mut one = DailySliceSet::new();
        for (o, t) in [("A", "B"), ("B", "C")] {
            one.push(TransactionRecord::new(d0, o, t, 1).unwrap());
        }
        assert!(census_series(&one).all_series().iter().all(|s| s.len() == 1));
    }

    #[test]
    fn census_csv_and_sidecar() {
        let report = CensusReport::from_results([(
            NaiveDate::from_ymd_opt(2014, 7, 30).unwrap(),
            triad_census(&graph(3, &[(0, 1)])),
        )]);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "date,c1,c2,c3,c4,c5,c6,c7,c8,c9,c10,c11,c12,c13,c14,c15,c16\n\
             2014-07-30,0,1,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n"
        );
        let mut side = Vec::new();
        write_class_sidecar(&mut side).unwrap();
        let side = String::from_utf8(side).unwrap();
        assert!(side.starts_with("index,column,code\n1,c1,003\n"));
        assert!(side.ends_with("16,c16,300\n"));
    }

    fn arb_graph(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (3..=max_n).prop_flat_map(|n| {
            (Just(n), prop::collection::vec((0..n, 0..n), 0..n * n))
                .prop_map(|(n, es)| (n, es.into_iter().filter(|(a, b)| a != b).collect()))
        })
    }

    proptest! {
        #[test]
        fn fast_census_equals_brute_force((n, edges) in arb_graph(12)) {
            let g = graph(n, &edges);
            let [dense, sparse, brute] = all_three(&g);
            prop_assert_eq!(&dense, &brute);
            prop_assert_eq!(&sparse, &brute);
            prop_assert_eq!(dense.total(), triple_count(n));
        }

        #[test]
        fn census_ignores_labels((n, edges) in arb_graph(12), seed in any::<u64>()) {
            let mut perm: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let moved: Vec<_> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
            prop_assert_eq!(triad_census(&graph(n, &edges)).unwrap().counts, triad_census(&graph(n, &moved)).unwrap().counts);
        }

        #[test]
        fn mutual_classes_vanish_iff_no_reciprocal_pair((n, edges) in arb_graph(12)) {
            let g = graph(n, &edges);
            let c = triad_census(&g).unwrap();
            let reciprocal = g.edges().iter().any(|e| g.has_edge(e.target, e.source));
            let mutual_triads: u64 = TriadClass::ALL.iter().filter(|k| k.has_mutual()).map(|&k| c.get(k)).sum();
            prop_assert_eq!(mutual_triads == 0, !reciprocal);
        }
    }
}
