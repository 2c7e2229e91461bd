//! Neighbour-list census for graphs too large for bit rows.

use super::{triple_count, TriadClass};
use crate::graph::DailyGraph;

fn neighbours(graph: &DailyGraph) -> Vec<Vec<u32>> {
    let n = graph.node_count();
    let mut nbr: Vec<Vec<u32>> = vec![Vec::new(); n];
    for e in graph.edges() {
        nbr[e.source as usize].push(e.target);
        nbr[e.target as usize].push(e.source);
    }
    for list in &mut nbr {
        list.sort_unstable();
        list.dedup();
    }
    nbr
}

fn code(graph: &DailyGraph, v: u32, u: u32, w: u32) -> u8 {
    let bit = |s, t, b: u8| if graph.has_edge(s, t) { b } else { 0 };
    bit(v, u, 1) | bit(u, v, 2) | bit(v, w, 4) | bit(w, v, 8) | bit(u, w, 16) | bit(w, u, 32)
}

pub(super) fn census(graph: &DailyGraph) -> [u64; 16] {
    let n = graph.node_count();
    let nbr = neighbours(graph);
    let mut counts = [0u64; 16];
    // in_nv[w] == v + 1 marks w as a neighbour of the current v
    let mut in_nv = vec![0u32; n];
    let mut seen = vec![0u64; n];
    let mut stamp = 0u64;
    for v in 0..n as u32 {
        for &w in &nbr[v as usize] {
            in_nv[w as usize] = v + 1;
        }
        for &u in nbr[v as usize].iter().filter(|&&u| u > v) {
            stamp += 1;
            let mut union = 0u64;
            for &w in nbr[v as usize].iter().chain(&nbr[u as usize]) {
                if w == u || w == v || seen[w as usize] == stamp {
                    continue;
                }
                seen[w as usize] = stamp;
                union += 1;
                // each linked triple is counted from its smallest linked pair
                if u < w || (v < w && w < u && in_nv[w as usize] != v + 1) {
                    counts[TriadClass::from_code(code(graph, v, u, w)) as usize] += 1;
                }
            }
            let isolated = n as u64 - 2 - union;
            let dyad = if graph.has_edge(v, u) && graph.has_edge(u, v) {
                TriadClass::T102
            } else {
                TriadClass::T012
            };
            counts[dyad as usize] += isolated;
        }
    }
    let rest: u64 = counts[1..].iter().sum();
    counts[TriadClass::T003 as usize] = triple_count(n) - rest;
    counts
}
