//! 3-uniform hypergraphs, the bidirectional reduction between colored
//! graphs and hypergraphs, and loose Hamilton cycle checking/search.
//!
//! The reduction maps an edge `(u, v)` with color `c` on a graph with `n`
//! vertices to the triple `{u, v, n + c}`: graph vertices come first, color
//! vertices after, so the transformation is a pure index shift.

use crate::graph::{Color, ColoredGraph, Vertex};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use thiserror::Error;

/// A 3-uniform hypergraph: unordered vertex triples over `1..=n_vertices`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph3 {
    pub n_vertices: u32,
    pub triples: BTreeSet<[u32; 3]>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HypergraphError {
    #[error("triple {0:?} has repeated vertices")]
    RepeatedVertex([u32; 3]),
    #[error("triple {0:?} out of range 1..={1}")]
    OutOfRange([u32; 3], u32),
    #[error("duplicate triple {0:?}")]
    Duplicate([u32; 3]),
}

impl Hypergraph3 {
    pub fn new(n_vertices: u32) -> Self {
        Hypergraph3 { n_vertices, triples: BTreeSet::new() }
    }

    pub fn add_triple(&mut self, t: [u32; 3]) -> Result<(), HypergraphError> {
        let mut s = t;
        s.sort_unstable();
        if s[0] == s[1] || s[1] == s[2] {
            return Err(HypergraphError::RepeatedVertex(t));
        }
        if s[0] == 0 || s[2] > self.n_vertices {
            return Err(HypergraphError::OutOfRange(t, self.n_vertices));
        }
        if !self.triples.insert(s) {
            return Err(HypergraphError::Duplicate(s));
        }
        Ok(())
    }

    pub fn has_triple(&self, t: [u32; 3]) -> bool {
        let mut s = t;
        s.sort_unstable();
        self.triples.contains(&s)
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }
}

/// Encodes a colored graph as a hypergraph on `n + kappa` vertices, one
/// triple `{u, v, n + c}` per edge. Bijective on edge sets.
pub fn graph_to_hypergraph(g: &ColoredGraph) -> Hypergraph3 {
    let n = g.n();
    let mut h = Hypergraph3::new(n + g.kappa());
    for (u, v, c) in g.sorted_edges() {
        h.add_triple([u, v, n + c]).expect("edge encodes to a valid triple");
    }
    h
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NotRepresentable {
    #[error("triple {0:?} does not have exactly two graph vertices and one color vertex")]
    BadShape([u32; 3]),
    #[error("pair ({0},{1}) appears with two colors")]
    DuplicatePair(Vertex, Vertex),
}

/// Decodes a hypergraph back into a colored graph under the declared
/// `(n, kappa)` split. Succeeds iff every triple has exactly two low
/// vertices and one high vertex and no unordered low pair repeats; inverse
/// of `graph_to_hypergraph` on its image.
pub fn hypergraph_to_graph(
    h: &Hypergraph3,
    n: u32,
    kappa: u32,
) -> Result<ColoredGraph, NotRepresentable> {
    let mut g = ColoredGraph::new(n, kappa);
    for t in &h.triples {
        let lows: Vec<u32> = t.iter().copied().filter(|&x| x <= n).collect();
        if lows.len() != 2 {
            return Err(NotRepresentable::BadShape(*t));
        }
        let high = t.iter().copied().find(|&x| x > n).unwrap();
        let c = high - n;
        if c > kappa {
            return Err(NotRepresentable::BadShape(*t));
        }
        g.add_edge(lows[0], lows[1], c as Color)
            .map_err(|_| NotRepresentable::DuplicatePair(lows[0], lows[1]))?;
    }
    Ok(g)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("loose Hamilton cycles need an even vertex count, got {0}")]
pub struct ParityError(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LooseViolation {
    NotPermutation { vertex: u32 },
    MissingTriple { index: usize, triple: [u32; 3] },
}

/// Checks whether `perm` orders the vertices into a loose Hamilton cycle:
/// all wrap-around triples `{v_{2i-1}, v_{2i}, v_{2i+1}}` must be
/// hyperedges. Odd vertex count is a parity error, distinct from a
/// violation.
pub fn loose_hamilton_check(
    h: &Hypergraph3,
    perm: &[u32],
) -> Result<Vec<LooseViolation>, ParityError> {
    let n = h.n_vertices;
    if n % 2 != 0 {
        return Err(ParityError(n));
    }
    let mut violations = Vec::new();
    if perm.len() != n as usize {
        violations.push(LooseViolation::NotPermutation { vertex: 0 });
        return Ok(violations);
    }
    let mut seen = vec![false; n as usize + 1];
    for &v in perm {
        if v == 0 || v > n || seen[v as usize] {
            violations.push(LooseViolation::NotPermutation { vertex: v });
            return Ok(violations);
        }
        seen[v as usize] = true;
    }
    let len = perm.len();
    for i in 0..len / 2 {
        let a = perm[2 * i];
        let b = perm[2 * i + 1];
        let c = perm[(2 * i + 2) % len];
        if !h.has_triple([a, b, c]) {
            let mut t = [a, b, c];
            t.sort_unstable();
            violations.push(LooseViolation::MissingTriple { index: i, triple: t });
        }
    }
    Ok(violations)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LooseSearch {
    Found(Vec<u32>),
    ProvenAbsent,
    BudgetExhausted,
}

/// Exhaustive backtracking search for a loose Hamilton cycle; practical for
/// small vertex counts. The budget counts node expansions; exhausting it
/// yields `BudgetExhausted`, which is distinct from a proof of absence.
pub fn exact_loose_hamilton(h: &Hypergraph3, budget: u64) -> Result<LooseSearch, ParityError> {
    let n = h.n_vertices;
    if n % 2 != 0 {
        return Err(ParityError(n));
    }
    if n == 0 {
        return Ok(LooseSearch::Found(vec![]));
    }
    let mut used = vec![false; n as usize + 1];
    let mut seq: Vec<u32> = Vec::with_capacity(n as usize);
    let mut spent = 0u64;
    // Vertex 1 sits at position 1 or position 2 of some rotation of any
    // loose cycle (rotations by two positions preserve the triple pattern),
    // so two anchored searches cover all cycles.
    for anchor_pos in 0..2u32 {
        seq.clear();
        used.iter_mut().for_each(|u| *u = false);
        if anchor_pos == 0 {
            seq.push(1);
            used[1] = true;
            match extend_loose(h, &mut seq, &mut used, &mut spent, budget) {
                LooseState::Found => return Ok(LooseSearch::Found(seq)),
                LooseState::Exhausted => return Ok(LooseSearch::BudgetExhausted),
                LooseState::Dead => {}
            }
        } else {
            for first in 2..=n {
                seq.clear();
                used.iter_mut().for_each(|u| *u = false);
                seq.push(first);
                seq.push(1);
                used[first as usize] = true;
                used[1] = true;
                match extend_loose(h, &mut seq, &mut used, &mut spent, budget) {
                    LooseState::Found => return Ok(LooseSearch::Found(seq)),
                    LooseState::Exhausted => return Ok(LooseSearch::BudgetExhausted),
                    LooseState::Dead => {}
                }
            }
        }
    }
    Ok(LooseSearch::ProvenAbsent)
}

enum LooseState {
    Found,
    Dead,
    Exhausted,
}

fn extend_loose(
    h: &Hypergraph3,
    seq: &mut Vec<u32>,
    used: &mut [bool],
    spent: &mut u64,
    budget: u64,
) -> LooseState {
    let n = h.n_vertices as usize;
    if seq.len() == n {
        // wrap-around triple check
        let ok = loose_hamilton_check(h, seq).map(|v| v.is_empty()).unwrap_or(false);
        return if ok { LooseState::Found } else { LooseState::Dead };
    }
    *spent += 1;
    if *spent > budget {
        return LooseState::Exhausted;
    }
    // When a triple boundary completes (every odd position beyond the
    // first), prune on triple existence.
    for v in 1..=h.n_vertices {
        if used[v as usize] {
            continue;
        }
        seq.push(v);
        let l = seq.len();
        let complete_triple_ok = if l >= 3 && l % 2 == 1 {
            h.has_triple([seq[l - 3], seq[l - 2], seq[l - 1]])
        } else {
            true
        };
        if complete_triple_ok {
            used[v as usize] = true;
            match extend_loose(h, seq, used, spent, budget) {
                LooseState::Dead => {
                    used[v as usize] = false;
                }
                other => return other,
            }
        }
        seq.pop();
    }
    LooseState::Dead
}

#[derive(Debug, Error)]
pub enum H3Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Reads the `.h3` text format: `N m`, then `m` lines `a b c`.
pub fn read_h3<R: BufRead>(reader: R) -> Result<Hypergraph3, H3Error> {
    let mut lines = reader.lines().enumerate();
    let (no, header) = lines
        .next()
        .ok_or(H3Error::Parse { line: 1, msg: "empty input".into() })?;
    let header = header?;
    let head: Vec<u64> = header
        .split_whitespace()
        .map(|t| t.parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| H3Error::Parse { line: no + 1, msg: e.to_string() })?;
    if head.len() != 2 {
        return Err(H3Error::Parse { line: no + 1, msg: "header must be `N m`".into() });
    }
    let mut h = Hypergraph3::new(head[0] as u32);
    let mut count = 0usize;
    for (no, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse::<u32>())
            .collect::<Result<_, _>>()
            .map_err(|e| H3Error::Parse { line: no + 1, msg: e.to_string() })?;
        if vals.len() != 3 {
            return Err(H3Error::Parse { line: no + 1, msg: "triple line must be `a b c`".into() });
        }
        h.add_triple([vals[0], vals[1], vals[2]])
            .map_err(|e| H3Error::Parse { line: no + 1, msg: e.to_string() })?;
        count += 1;
    }
    if count != head[1] as usize {
        return Err(H3Error::Parse {
            line: 1,
            msg: format!("header declares {} triples, found {count}", head[1]),
        });
    }
    Ok(h)
}

/// Writes the `.h3` format with sorted triples.
pub fn write_h3<W: Write>(h: &Hypergraph3, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {}", h.n_vertices, h.triple_count())?;
    for t in &h.triples {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_single_edge() {
        let mut g = ColoredGraph::new(4, 4);
        g.add_edge(1, 2, 3).unwrap();
        let h = graph_to_hypergraph(&g);
        assert_eq!(h.n_vertices, 8);
        assert!(h.has_triple([1, 2, 7]));
        assert_eq!(h.triple_count(), 1);
    }

    #[test]
    fn reduction_empty_graph() {
        let g = ColoredGraph::new(4, 4);
        let h = graph_to_hypergraph(&g);
        assert_eq!(h.n_vertices, 8);
        assert_eq!(h.triple_count(), 0);
    }

    #[test]
    fn round_trip_identity() {
        let mut g = ColoredGraph::new(5, 7);
        g.add_edge(1, 2, 3).unwrap();
        g.add_edge(2, 5, 7).unwrap();
        g.add_edge(3, 4, 1).unwrap();
        let h = graph_to_hypergraph(&g);
        let g2 = hypergraph_to_graph(&h, 5, 7).unwrap();
        assert_eq!(g.sorted_edges(), g2.sorted_edges());
    }

    #[test]
    fn decode_rejects_bad_shapes() {
        let mut h = Hypergraph3::new(8);
        h.add_triple([1, 2, 3]).unwrap();
        assert!(matches!(
            hypergraph_to_graph(&h, 4, 4),
            Err(NotRepresentable::BadShape(_))
        ));
        let mut h = Hypergraph3::new(8);
        h.add_triple([1, 2, 7]).unwrap();
        h.add_triple([1, 2, 8]).unwrap();
        assert!(matches!(
            hypergraph_to_graph(&h, 4, 4),
            Err(NotRepresentable::DuplicatePair(1, 2))
        ));
    }

    #[test]
    fn loose_check_cases() {
        let mut h = Hypergraph3::new(4);
        h.add_triple([1, 2, 3]).unwrap();
        h.add_triple([3, 4, 1]).unwrap();
        assert!(loose_hamilton_check(&h, &[1, 2, 3, 4]).unwrap().is_empty());

        let mut h2 = Hypergraph3::new(4);
        h2.add_triple([1, 2, 3]).unwrap();
        let v = loose_hamilton_check(&h2, &[1, 2, 3, 4]).unwrap();
        assert!(matches!(v[0], LooseViolation::MissingTriple { index: 1, .. }));

        let h3 = Hypergraph3::new(5);
        assert_eq!(loose_hamilton_check(&h3, &[1, 2, 3, 4, 5]), Err(ParityError(5)));
    }

    #[test]
    fn loose_search_finds_and_proves_absent() {
        let mut h = Hypergraph3::new(4);
        h.add_triple([1, 2, 3]).unwrap();
        h.add_triple([3, 4, 1]).unwrap();
        match exact_loose_hamilton(&h, 1 << 20).unwrap() {
            LooseSearch::Found(perm) => {
                assert!(loose_hamilton_check(&h, &perm).unwrap().is_empty());
            }
            other => panic!("expected cycle, got {other:?}"),
        }

        let empty = Hypergraph3::new(4);
        assert_eq!(exact_loose_hamilton(&empty, 1 << 20).unwrap(), LooseSearch::ProvenAbsent);

        let odd = Hypergraph3::new(5);
        assert!(exact_loose_hamilton(&odd, 1 << 20).is_err());
    }

    #[test]
    fn h3_round_trip_and_errors() {
        let mut h = Hypergraph3::new(6);
        h.add_triple([1, 2, 5]).unwrap();
        h.add_triple([2, 3, 6]).unwrap();
        let mut buf = Vec::new();
        write_h3(&h, &mut buf).unwrap();
        let h2 = read_h3(&buf[..]).unwrap();
        assert_eq!(h, h2);

        let bad = "4 1\n1 1 3\n";
        assert!(read_h3(bad.as_bytes()).is_err());
    }
}
