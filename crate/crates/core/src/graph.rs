//! Colored graphs and digraphs, rainbow Hamilton cycle certificates, and the
//! certificate verifier. Vertices and colors are 1-based dense integer ids.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use thiserror::Error;

pub type Vertex = u32;
pub type Color = u32;

/// Undirected simple graph with one color per edge.
#[derive(Debug, Clone)]
pub struct ColoredGraph {
    n: u32,
    kappa: u32,
    adj: Vec<Vec<(Vertex, Color)>>,
    edges: HashMap<(Vertex, Vertex), Color>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("self-loop at vertex {0}")]
    SelfLoop(Vertex),
    #[error("vertex {0} out of range 1..={1}")]
    VertexOutOfRange(Vertex, u32),
    #[error("color {c} of edge ({u},{v}) out of range 1..={kappa}")]
    ColorOutOfRange { u: Vertex, v: Vertex, c: Color, kappa: u32 },
    #[error("duplicate edge ({0},{1})")]
    DuplicateEdge(Vertex, Vertex),
}

/// A problem found by `validate`; mirrors `GraphError` but is data, not a
/// control-flow error.
pub type GraphViolation = GraphError;

fn canon(u: Vertex, v: Vertex) -> (Vertex, Vertex) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl ColoredGraph {
    pub fn new(n: u32, kappa: u32) -> Self {
        ColoredGraph {
            n,
            kappa,
            adj: vec![Vec::new(); n as usize],
            edges: HashMap::new(),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn add_edge(&mut self, u: Vertex, v: Vertex, c: Color) -> Result<(), GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        for &x in &[u, v] {
            if x == 0 || x > self.n {
                return Err(GraphError::VertexOutOfRange(x, self.n));
            }
        }
        if c == 0 || c > self.kappa {
            return Err(GraphError::ColorOutOfRange { u, v, c, kappa: self.kappa });
        }
        if self.edges.contains_key(&canon(u, v)) {
            return Err(GraphError::DuplicateEdge(u, v));
        }
        self.edges.insert(canon(u, v), c);
        self.adj[(u - 1) as usize].push((v, c));
        self.adj[(v - 1) as usize].push((u, c));
        Ok(())
    }

    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        self.edges.contains_key(&canon(u, v))
    }

    pub fn edge_color(&self, u: Vertex, v: Vertex) -> Option<Color> {
        self.edges.get(&canon(u, v)).copied()
    }

    /// Neighbors of `v` with edge colors, in insertion order. The sampler
    /// inserts in a fixed random permutation order, making greedy scans
    /// reproducible.
    pub fn neighbors(&self, v: Vertex) -> &[(Vertex, Color)] {
        &self.adj[(v - 1) as usize]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adj[(v - 1) as usize].len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> {
        1..=self.n
    }

    /// Edges sorted by endpoint pair, for stable output.
    pub fn sorted_edges(&self) -> Vec<(Vertex, Vertex, Color)> {
        let mut es: Vec<_> = self.edges.iter().map(|(&(u, v), &c)| (u, v, c)).collect();
        es.sort_unstable();
        es
    }

    /// Reorders every adjacency list with the given shuffle function.
    pub(crate) fn shuffle_adjacency<F>(&mut self, mut shuffle: F)
    where
        F: FnMut(Vertex, &mut Vec<(Vertex, Color)>),
    {
        for v in 1..=self.n {
            let list = &mut self.adj[(v - 1) as usize];
            shuffle(v, list);
        }
    }

    /// Builds a graph from possibly-invalid raw edges without checking
    /// invariants; pair with `validate`.
    pub fn from_raw_edges(n: u32, kappa: u32, raw: &[(Vertex, Vertex, Color)]) -> RawColoredGraph {
        RawColoredGraph {
            n,
            kappa,
            edges: raw.to_vec(),
        }
    }
}

/// An unchecked edge list; `validate` reports every invariant violation.
#[derive(Debug, Clone)]
pub struct RawColoredGraph {
    pub n: u32,
    pub kappa: u32,
    pub edges: Vec<(Vertex, Vertex, Color)>,
}

/// Checks all colored-graph invariants; pure, returns violations as data.
pub fn validate_colored_graph(g: &RawColoredGraph) -> Vec<GraphViolation> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for &(u, v, c) in &g.edges {
        if u == v {
            out.push(GraphError::SelfLoop(u));
            continue;
        }
        for &x in &[u, v] {
            if x == 0 || x > g.n {
                out.push(GraphError::VertexOutOfRange(x, g.n));
            }
        }
        if c == 0 || c > g.kappa {
            out.push(GraphError::ColorOutOfRange { u, v, c, kappa: g.kappa });
        }
        if seen.insert(canon(u, v), c).is_some() {
            out.push(GraphError::DuplicateEdge(u, v));
        }
    }
    out
}

/// Directed graph with at most one colored arc per ordered pair.
#[derive(Debug, Clone)]
pub struct ColoredDigraph {
    n: u32,
    kappa: u32,
    /// Out-lists in exposure order.
    out: Vec<Vec<(Vertex, Color)>>,
    /// Arc -> (color, slot index in the source out-list).
    arcs: HashMap<(Vertex, Vertex), (Color, u32)>,
}

impl ColoredDigraph {
    pub fn new(n: u32, kappa: u32) -> Self {
        ColoredDigraph {
            n,
            kappa,
            out: vec![Vec::new(); n as usize],
            arcs: HashMap::new(),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn add_arc(&mut self, u: Vertex, v: Vertex, c: Color) -> Result<(), GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        for &x in &[u, v] {
            if x == 0 || x > self.n {
                return Err(GraphError::VertexOutOfRange(x, self.n));
            }
        }
        if c == 0 || c > self.kappa {
            return Err(GraphError::ColorOutOfRange { u, v, c, kappa: self.kappa });
        }
        if self.arcs.contains_key(&(u, v)) {
            return Err(GraphError::DuplicateEdge(u, v));
        }
        let idx = self.out[(u - 1) as usize].len() as u32;
        self.arcs.insert((u, v), (c, idx));
        self.out[(u - 1) as usize].push((v, c));
        Ok(())
    }

    pub fn has_arc(&self, u: Vertex, v: Vertex) -> bool {
        self.arcs.contains_key(&(u, v))
    }

    pub fn arc_color(&self, u: Vertex, v: Vertex) -> Option<Color> {
        self.arcs.get(&(u, v)).map(|&(c, _)| c)
    }

    /// Slot index of the arc `(u, v)` in `u`'s out-list.
    pub fn arc_slot(&self, u: Vertex, v: Vertex) -> Option<u32> {
        self.arcs.get(&(u, v)).map(|&(_, idx)| idx)
    }

    /// Out-list of `v` in exposure order.
    pub fn out_list(&self, v: Vertex) -> &[(Vertex, Color)] {
        &self.out[(v - 1) as usize]
    }

    pub fn out_degree(&self, v: Vertex) -> usize {
        self.out[(v - 1) as usize].len()
    }

    /// Rebuilds the out-list ordering; arc slot indices are refreshed.
    pub(crate) fn set_out_order(&mut self, v: Vertex, order: Vec<(Vertex, Color)>) {
        debug_assert_eq!(order.len(), self.out[(v - 1) as usize].len());
        for (idx, &(t, c)) in order.iter().enumerate() {
            self.arcs.insert((v, t), (c, idx as u32));
        }
        self.out[(v - 1) as usize] = order;
    }

    pub fn sorted_arcs(&self) -> Vec<(Vertex, Vertex, Color)> {
        let mut es: Vec<_> = self
            .arcs
            .iter()
            .map(|(&(u, v), &(c, _))| (u, v, c))
            .collect();
        es.sort_unstable();
        es
    }
}

/// Proposed rainbow Hamilton cycle: a cyclic vertex order plus the claimed
/// edge colors in cycle order (`colors[i]` is the color of the edge from
/// `order[i]` to `order[(i+1) % n]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HamiltonCycleCertificate {
    pub order: Vec<Vertex>,
    pub colors: Vec<Color>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MalformedCertificate {
    #[error("order has length {got}, expected {expected}")]
    OrderLength { expected: usize, got: usize },
    #[error("colors has length {got}, expected {expected}")]
    ColorsLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CertViolation {
    NotPermutation { vertex: Vertex },
    MissingEdge { u: Vertex, v: Vertex },
    ColorMismatch { u: Vertex, v: Vertex, expected: Color, got: Color },
    RepeatedColor { c: Color },
}

impl fmt::Display for CertViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertViolation::NotPermutation { vertex } => {
                write!(f, "order is not a permutation (vertex {vertex})")
            }
            CertViolation::MissingEdge { u, v } => write!(f, "missing edge ({u},{v})"),
            CertViolation::ColorMismatch { u, v, expected, got } => {
                write!(f, "edge ({u},{v}) has color {expected}, certificate claims {got}")
            }
            CertViolation::RepeatedColor { c } => write!(f, "repeated color {c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub violations: Vec<CertViolation>,
}

impl VerificationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that `cert` is a rainbow Hamilton cycle of `g`: the order is a
/// permutation of all vertices, consecutive vertices are adjacent with the
/// claimed colors, and the colors are pairwise distinct.
///
/// A length mismatch is a malformed certificate, which is distinct from a
/// well-formed certificate that fails verification.
pub fn verify_rainbow_hamilton(
    g: &ColoredGraph,
    cert: &HamiltonCycleCertificate,
) -> Result<VerificationReport, MalformedCertificate> {
    let n = g.n() as usize;
    if cert.order.len() != n {
        return Err(MalformedCertificate::OrderLength {
            expected: n,
            got: cert.order.len(),
        });
    }
    if cert.colors.len() != n {
        return Err(MalformedCertificate::ColorsLength {
            expected: n,
            got: cert.colors.len(),
        });
    }
    let mut violations = Vec::new();
    let mut seen = vec![false; n + 1];
    for &v in &cert.order {
        if v == 0 || v as usize > n || seen[v as usize] {
            violations.push(CertViolation::NotPermutation { vertex: v });
        } else {
            seen[v as usize] = true;
        }
    }
    if violations.is_empty() {
        for i in 0..n {
            let u = cert.order[i];
            let v = cert.order[(i + 1) % n];
            match g.edge_color(u, v) {
                None => violations.push(CertViolation::MissingEdge { u, v }),
                Some(c) => {
                    if c != cert.colors[i] {
                        violations.push(CertViolation::ColorMismatch {
                            u,
                            v,
                            expected: c,
                            got: cert.colors[i],
                        });
                    }
                }
            }
        }
    }
    let mut color_seen = HashMap::new();
    for &c in &cert.colors {
        let count = color_seen.entry(c).or_insert(0u32);
        *count += 1;
        if *count == 2 {
            violations.push(CertViolation::RepeatedColor { c });
        }
    }
    Ok(VerificationReport { violations })
}

#[derive(Debug, Error)]
pub enum CgrError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Reads the `.cgr` text format: `n kappa m`, then `m` lines `u v c` with
/// `1 <= u < v <= n` and `1 <= c <= kappa`. Duplicates and range violations
/// are rejected with line numbers.
pub fn read_cgr<R: BufRead>(reader: R) -> Result<ColoredGraph, CgrError> {
    let mut lines = reader.lines().enumerate();
    let (lineno, header) = lines
        .next()
        .ok_or_else(|| CgrError::Parse { line: 1, msg: "empty input".into() })?;
    let header = header?;
    let parts: Vec<u64> = header
        .split_whitespace()
        .map(|t| t.parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CgrError::Parse { line: lineno + 1, msg: format!("bad header: {e}") })?;
    if parts.len() != 3 {
        return Err(CgrError::Parse {
            line: lineno + 1,
            msg: "header must be `n kappa m`".into(),
        });
    }
    let (n, kappa, m) = (parts[0] as u32, parts[1] as u32, parts[2] as usize);
    let mut g = ColoredGraph::new(n, kappa);
    let mut count = 0usize;
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<u64> = line
            .split_whitespace()
            .map(|t| t.parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CgrError::Parse { line: lineno + 1, msg: format!("bad edge: {e}") })?;
        if toks.len() != 3 {
            return Err(CgrError::Parse {
                line: lineno + 1,
                msg: "edge line must be `u v c`".into(),
            });
        }
        let (u, v, c) = (toks[0] as u32, toks[1] as u32, toks[2] as u32);
        if u >= v {
            return Err(CgrError::Parse {
                line: lineno + 1,
                msg: format!("edges must satisfy u < v, got ({u},{v})"),
            });
        }
        g.add_edge(u, v, c)
            .map_err(|e| CgrError::Parse { line: lineno + 1, msg: e.to_string() })?;
        count += 1;
    }
    if count != m {
        return Err(CgrError::Parse {
            line: 1,
            msg: format!("header declares {m} edges, found {count}"),
        });
    }
    Ok(g)
}

/// Writes the `.cgr` format with edges sorted by endpoint pair.
pub fn write_cgr<W: Write>(g: &ColoredGraph, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {} {}", g.n(), g.kappa(), g.edge_count())?;
    for (u, v, c) in g.sorted_edges() {
        writeln!(w, "{u} {v} {c}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(colors: [Color; 3]) -> ColoredGraph {
        let mut g = ColoredGraph::new(3, 3);
        g.add_edge(1, 2, colors[0]).unwrap();
        g.add_edge(2, 3, colors[1]).unwrap();
        g.add_edge(1, 3, colors[2]).unwrap();
        g
    }

    #[test]
    fn verify_accepts_rainbow_triangle() {
        let g = triangle([1, 2, 3]);
        let cert = HamiltonCycleCertificate {
            order: vec![1, 2, 3],
            colors: vec![1, 2, 3],
        };
        assert!(verify_rainbow_hamilton(&g, &cert).unwrap().ok());
    }

    #[test]
    fn verify_flags_repeated_color() {
        let g = triangle([1, 1, 2]);
        let cert = HamiltonCycleCertificate {
            order: vec![1, 2, 3],
            colors: vec![1, 1, 2],
        };
        let report = verify_rainbow_hamilton(&g, &cert).unwrap();
        assert!(!report.ok());
        assert!(report
            .violations
            .contains(&CertViolation::RepeatedColor { c: 1 }));
    }

    #[test]
    fn verify_flags_missing_edge() {
        // 4-cycle 1-2-3-4 with chord {1,3} absent.
        let mut g = ColoredGraph::new(4, 4);
        g.add_edge(1, 2, 1).unwrap();
        g.add_edge(2, 3, 2).unwrap();
        g.add_edge(3, 4, 3).unwrap();
        g.add_edge(1, 4, 4).unwrap();
        let cert = HamiltonCycleCertificate {
            order: vec![1, 3, 2, 4],
            colors: vec![1, 2, 3, 4],
        };
        let report = verify_rainbow_hamilton(&g, &cert).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, CertViolation::MissingEdge { u: 1, v: 3 })));
    }

    #[test]
    fn verify_rejects_malformed_length() {
        let g = triangle([1, 2, 3]);
        let cert = HamiltonCycleCertificate {
            order: vec![1, 2],
            colors: vec![1, 2],
        };
        assert!(matches!(
            verify_rainbow_hamilton(&g, &cert),
            Err(MalformedCertificate::OrderLength { .. })
        ));
    }

    #[test]
    fn verify_invariant_under_rotation_and_reversal() {
        let g = triangle([1, 2, 3]);
        // rotation: (2,3,1); colors rotate with the edges
        let rot = HamiltonCycleCertificate {
            order: vec![2, 3, 1],
            colors: vec![2, 3, 1],
        };
        assert!(verify_rainbow_hamilton(&g, &rot).unwrap().ok());
        // reversal: (3,2,1)
        let rev = HamiltonCycleCertificate {
            order: vec![3, 2, 1],
            colors: vec![2, 1, 3],
        };
        assert!(verify_rainbow_hamilton(&g, &rev).unwrap().ok());
    }

    #[test]
    fn validate_reports_violations() {
        let raw = ColoredGraph::from_raw_edges(5, 5, &[]);
        assert!(validate_colored_graph(&raw).is_empty());

        let raw = ColoredGraph::from_raw_edges(5, 5, &[(2, 2, 1)]);
        assert_eq!(validate_colored_graph(&raw), vec![GraphError::SelfLoop(2)]);

        let raw = ColoredGraph::from_raw_edges(5, 5, &[(1, 2, 7)]);
        assert!(matches!(
            validate_colored_graph(&raw)[0],
            GraphError::ColorOutOfRange { c: 7, .. }
        ));
    }

    #[test]
    fn cgr_round_trip_and_line_errors() {
        let g = triangle([1, 2, 3]);
        let mut buf = Vec::new();
        write_cgr(&g, &mut buf).unwrap();
        let g2 = read_cgr(&buf[..]).unwrap();
        assert_eq!(g.sorted_edges(), g2.sorted_edges());

        let bad = "3 3 2\n1 2 1\n1 2 2\n";
        let err = read_cgr(bad.as_bytes()).unwrap_err();
        match err {
            CgrError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected: {other:?}"),
        }
    }
}
