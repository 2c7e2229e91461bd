//! Bit-row census.
//!
//! Triads with all three dyads linked are counted per linked pair `v < u`
//! by popcounting the common neighbours `w > u` split by dyad type. Triads
//! with exactly two linked dyads are counted per centre node. The three
//! classes with fewer links follow from the dyad census.

use super::{class_table, triple_count, TriadClass};
use crate::graph::{iter_bits, DailyGraph};

const OUT: usize = 0;
const IN: usize = 1;
const MUT: usize = 2;
const NBR: usize = 3;
const ROWS: usize = 4;

/// Bits contributed by a dyad of type `t` (0: forward only, 1: backward
/// only, 2: mutual) given the code bits for each direction.
fn pair_bits(t: usize, fwd: u8, back: u8) -> u8 {
    match t {
        0 => fwd,
        1 => back,
        _ => fwd | back,
    }
}

struct Rows {
    words: usize,
    bits: Vec<u64>,
}

impl Rows {
    fn new(graph: &DailyGraph) -> Rows {
        let n = graph.node_count();
        let out = graph.out_bits();
        let inn = out.transpose(n);
        let words = out.words();
        let mut bits = vec![0u64; n * ROWS * words];
        for v in 0..n {
            let (o, i) = (out.row(v), inn.row(v));
            let base = v * ROWS * words;
            for k in 0..words {
                bits[base + OUT * words + k] = o[k] & !i[k];
                bits[base + IN * words + k] = i[k] & !o[k];
                bits[base + MUT * words + k] = o[k] & i[k];
                bits[base + NBR * words + k] = o[k] | i[k];
            }
        }
        Rows { words, bits }
    }

    #[inline]
    fn row(&self, v: usize, kind: usize) -> &[u64] {
        let start = (v * ROWS + kind) * self.words;
        &self.bits[start..start + self.words]
    }

    #[inline]
    fn dyad_type(&self, v: usize, u: usize) -> usize {
        let bit = |kind| self.row(v, kind)[u / 64] >> (u % 64) & 1 == 1;
        if bit(OUT) {
            OUT
        } else if bit(IN) {
            IN
        } else {
            MUT
        }
    }
}

/// Mask keeping bits strictly above `x` within word `x / 64`.
#[inline]
fn above(x: usize) -> u64 {
    match x % 64 {
        63 => 0,
        r => !0u64 << (r + 1),
    }
}

pub(super) fn census(graph: &DailyGraph) -> [u64; 16] {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("popcnt") {
        // SAFETY: the CPU supports the feature the clone is compiled for.
        return unsafe { census_popcnt(graph) };
    }
    census_kernel(graph)
}

/// The same kernel with hardware popcount; the portable baseline lacks it.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn census_popcnt(graph: &DailyGraph) -> [u64; 16] {
    census_kernel(graph)
}

#[inline(always)]
fn census_kernel(graph: &DailyGraph) -> [u64; 16] {
    let n = graph.node_count();
    let rows = Rows::new(graph);
    let words = rows.words;

    // closed[t_vu][t_vw][t_uw]
    let mut closed = [[[0u64; 3]; 3]; 3];
    // open[t_ca][t_cb] with a, b unlinked
    let mut open = [[0u64; 3]; 3];

    for v in 0..n {
        let nv = rows.row(v, NBR);
        let tv_rows = [rows.row(v, OUT), rows.row(v, IN), rows.row(v, MUT)];
        for u in iter_bits(nv).filter(|&u| u > v) {
            let t_vu = rows.dyad_type(v, u);
            let nu = rows.row(u, NBR);
            let tu_rows = [rows.row(u, OUT), rows.row(u, IN), rows.row(u, MUT)];
            let slot = &mut closed[t_vu];
            let first = u / 64;
            for k in first..words {
                let mask = if k == first { above(u) } else { !0 };
                if nv[k] & nu[k] & mask == 0 {
                    continue;
                }
                let us = [tu_rows[0][k], tu_rows[1][k], tu_rows[2][k]];
                for (tv, cells) in slot.iter_mut().enumerate() {
                    let rv = tv_rows[tv][k] & mask;
                    if rv == 0 {
                        continue;
                    }
                    for (cell, &bits) in cells.iter_mut().zip(&us) {
                        *cell += (rv & bits).count_ones() as u64;
                    }
                }
            }
        }
    }

    for c in 0..n {
        let tc_rows = [rows.row(c, OUT), rows.row(c, IN), rows.row(c, MUT)];
        for a in iter_bits(rows.row(c, NBR)) {
            let ta = rows.dyad_type(c, a);
            let na = rows.row(a, NBR);
            let first = a / 64;
            // Same-type partners must come after `a` so each pair is seen once.
            let mut same = (tc_rows[ta][first] & !na[first] & above(a)).count_ones() as u64;
            for k in first + 1..words {
                same += (tc_rows[ta][k] & !na[k]).count_ones() as u64;
            }
            open[ta][ta] += same;
            for tb in ta + 1..3 {
                let rc = tc_rows[tb];
                open[ta][tb] += rc.iter().zip(na).map(|(&x, &y)| (x & !y).count_ones() as u64).sum::<u64>();
            }
        }
    }

    let table = class_table();
    let mut counts = [0u64; 16];
    for (t_vu, a) in closed.iter().enumerate() {
        for (tv, b) in a.iter().enumerate() {
            for (tu, &c) in b.iter().enumerate() {
                let code = pair_bits(t_vu, 1, 2) | pair_bits(tv, 4, 8) | pair_bits(tu, 16, 32);
                counts[table[code as usize] as usize] += c;
            }
        }
    }
    for (ta, row) in open.iter().enumerate() {
        for (tb, &c) in row.iter().enumerate() {
            let code = pair_bits(ta, 1, 2) | pair_bits(tb, 4, 8);
            counts[table[code as usize] as usize] += c;
        }
    }

    let (mutual, asym) = dyad_census(graph);
    complete_from_dyads(&mut counts, n, mutual, asym);
    counts
}

/// Mutual and asymmetric dyad counts.
pub(super) fn dyad_census(graph: &DailyGraph) -> (u64, u64) {
    let mut mutual_edges = 0u64;
    for e in graph.edges() {
        if graph.has_edge(e.target, e.source) {
            mutual_edges += 1;
        }
    }
    let mutual = mutual_edges / 2;
    let asym = graph.edge_count() as u64 - mutual_edges;
    (mutual, asym)
}

/// Fills 012, 102 and 003 given the counts of every class with at least two
/// linked dyads. Each mutual (asymmetric) dyad sits in `n - 2` triads; those
/// not already counted in a richer class are 102 (012).
pub(super) fn complete_from_dyads(counts: &mut [u64; 16], n: usize, mutual: u64, asym: u64) {
    let third = n as u64 - 2;
    let (mut m_used, mut a_used) = (0u64, 0u64);
    for class in TriadClass::ALL {
        let (m, a, null) = class.man();
        if null <= 1 {
            m_used += m * counts[class as usize];
            a_used += a * counts[class as usize];
        }
    }
    counts[TriadClass::T102 as usize] = mutual * third - m_used;
    counts[TriadClass::T012 as usize] = asym * third - a_used;
    let rest: u64 = counts[1..].iter().sum();
    counts[TriadClass::T003 as usize] = triple_count(n) - rest;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn above_masks() {
        assert_eq!(above(0), !1u64);
        assert_eq!(above(63), 0);
        assert_eq!(above(64 + 62), 1u64 << 63);
    }
}
