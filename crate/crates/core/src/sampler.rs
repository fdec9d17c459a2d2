//! The layered digraph model: three independent colored digraphs sampled
//! with probabilities `p_1, p_2, p_3`, colored uniformly from the full
//! color set, then merged into one colored undirected graph with layer 1
//! taking priority over layer 2 over layer 3.
//!
//! The full sample is generated upfront; the per-vertex out-lists are kept
//! in a fixed random permutation order so that "expose the first half of a
//! vertex's out-neighbors" is well-defined and reproducible. Downstream
//! stages simulate lazy exposure through the ledger.

use crate::graph::{Color, ColoredDigraph, ColoredGraph, Vertex};
use crate::params::ParamSet;
use crate::rng::RandomSource;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("arc ({u},{v}) invalid in layer {layer}: {msg}")]
    BadArc { layer: usize, u: Vertex, v: Vertex, msg: String },
    #[error("missing tie-break coin for pair ({0},{1})")]
    MissingCoin(Vertex, Vertex),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One sampled instance of the three-layer model with all derived views.
#[derive(Debug, Clone)]
pub struct LayeredSample {
    pub params: ParamSet,
    /// The raw layers, colored from the full color set.
    pub layers: [ColoredDigraph; 3],
    /// Tie-break coins, one per unordered pair whose top layer contains
    /// both orientations: `true` selects the color of the arc from the
    /// smaller to the larger endpoint. The same coin also resolves the
    /// half-probability placement rule of the first color-class graph, so
    /// merge and split can never disagree.
    pub coins: BTreeMap<(Vertex, Vertex), bool>,
    /// Out-degree of each vertex in `D_i` (arcs of layer i colored in C_i).
    pub d_plus: Vec<[u32; 3]>,
    /// In-neighbor lists of the `D_i` subdigraphs.
    pub rev: [Vec<Vec<Vertex>>; 3],
    /// Edge-disjoint colored graphs `G_1, G_2, G_3`.
    pub g: [ColoredGraph; 3],
    /// Derived edge probability of `G_2`.
    pub q2: f64,
}

fn n_of(params: &ParamSet) -> u32 {
    params.n as u32
}

/// Samples one instance: each ordered pair `(u,v)` is an arc of layer `i`
/// independently with probability `p_i`, colors uniform on the full set.
/// Deterministic given `(seed, stream schedule)`.
pub fn sample_layered(params: &ParamSet, src: &RandomSource) -> LayeredSample {
    let n = n_of(params);
    let kappa = params.kappa as u32;
    let mut layers = [
        ColoredDigraph::new(n, kappa),
        ColoredDigraph::new(n, kappa),
        ColoredDigraph::new(n, kappa),
    ];

    for i in 0..3 {
        let p = params.p(i);
        if p <= 0.0 {
            continue;
        }
        let mut rng = src.stream_indexed("layer", i as u64);
        let mut order_rng = src.stream_indexed("layer-order", i as u64);
        let lg = (1.0 - p).ln();
        for u in 1..=n {
            // Geometric jumps over the n-1 target slots.
            let mut pos: i64 = -1;
            loop {
                let x: f64 = rng.gen();
                let jump = ((1.0 - x).ln() / lg).floor() as i64;
                pos += 1 + jump;
                if pos >= i64::from(n) - 1 {
                    break;
                }
                let slot = pos as u32;
                let target = if slot + 1 <= u - 1 { slot + 1 } else { slot + 2 };
                let color = rng.gen_range(1..=kappa);
                layers[i]
                    .add_arc(u, target, color)
                    .expect("sampled arc is always valid");
            }
            // Fixed random exposure permutation of the out-list.
            let mut list = layers[i].out_list(u).to_vec();
            list.shuffle(&mut order_rng);
            layers[i].set_out_order(u, list);
        }
    }

    // Tie-break coins for pairs whose top layer holds both orientations.
    let mut coin_pairs = BTreeSet::new();
    for (i, layer) in layers.iter().enumerate() {
        for (u, v, _) in layer.sorted_arcs() {
            if u < v && layer.has_arc(v, u) {
                let top = (0..3)
                    .find(|&j| layers[j].has_arc(u, v) || layers[j].has_arc(v, u))
                    .unwrap();
                if top == i {
                    coin_pairs.insert((u, v));
                }
            }
        }
    }
    let mut coin_rng = src.stream("coins");
    let coins: BTreeMap<(Vertex, Vertex), bool> = coin_pairs
        .into_iter()
        .map(|pair| (pair, coin_rng.gen::<bool>()))
        .collect();

    finish_sample(params.clone(), layers, coins, Some(src))
}

/// Builds a sample from explicit per-layer arc lists. Insertion order is the
/// exposure order; adjacency lists of the derived graphs keep construction
/// order. Used by tests and the `.lay` reader.
pub fn sample_from_arcs(
    params: &ParamSet,
    arcs: [&[(Vertex, Vertex, Color)]; 3],
    coins: BTreeMap<(Vertex, Vertex), bool>,
) -> Result<LayeredSample, SampleError> {
    let n = n_of(params);
    let kappa = params.kappa as u32;
    let mut layers = [
        ColoredDigraph::new(n, kappa),
        ColoredDigraph::new(n, kappa),
        ColoredDigraph::new(n, kappa),
    ];
    for (i, list) in arcs.iter().enumerate() {
        for &(u, v, c) in list.iter() {
            layers[i]
                .add_arc(u, v, c)
                .map_err(|e| SampleError::BadArc { layer: i + 1, u, v, msg: e.to_string() })?;
        }
    }
    // Verify every needed coin is present.
    for (i, layer) in layers.iter().enumerate() {
        for (u, v, _) in layer.sorted_arcs() {
            if u < v && layer.has_arc(v, u) {
                let top = (0..3)
                    .find(|&j| layers[j].has_arc(u, v) || layers[j].has_arc(v, u))
                    .unwrap();
                if top == i && !coins.contains_key(&(u, v)) {
                    return Err(SampleError::MissingCoin(u, v));
                }
            }
        }
    }
    Ok(finish_sample(params.clone(), layers, coins, None))
}

fn finish_sample(
    params: ParamSet,
    layers: [ColoredDigraph; 3],
    coins: BTreeMap<(Vertex, Vertex), bool>,
    src: Option<&RandomSource>,
) -> LayeredSample {
    let n = n_of(&params);
    let mut d_plus = vec![[0u32; 3]; n as usize];
    let mut rev: [Vec<Vec<Vertex>>; 3] = [
        vec![Vec::new(); n as usize],
        vec![Vec::new(); n as usize],
        vec![Vec::new(); n as usize],
    ];
    for i in 0..3 {
        for u in 1..=n {
            for &(v, c) in layers[i].out_list(u) {
                if params.class_of(c) == Some(i) {
                    d_plus[(u - 1) as usize][i] += 1;
                    rev[i][(v - 1) as usize].push(u);
                }
            }
        }
    }

    let g = build_class_graphs(&params, &layers, &coins, src);
    let q2 = params.q2();
    LayeredSample { params, layers, coins, d_plus, rev, g, q2 }
}

fn all_pairs(layers: &[ColoredDigraph; 3]) -> BTreeSet<(Vertex, Vertex)> {
    let mut pairs = BTreeSet::new();
    for layer in layers {
        for (u, v, _) in layer.sorted_arcs() {
            pairs.insert((u.min(v), u.max(v)));
        }
    }
    pairs
}

/// The layer and color the merged edge `{u,v}` inherits.
fn merged_color(
    layers: &[ColoredDigraph; 3],
    coins: &BTreeMap<(Vertex, Vertex), bool>,
    u: Vertex,
    v: Vertex,
) -> (usize, Color) {
    debug_assert!(u < v);
    for (i, layer) in layers.iter().enumerate() {
        let fwd = layer.arc_color(u, v);
        let bwd = layer.arc_color(v, u);
        match (fwd, bwd) {
            (Some(cf), Some(cb)) => {
                let coin = *coins.get(&(u, v)).expect("coin logged for double pair");
                return (i, if coin { cf } else { cb });
            }
            (Some(cf), None) => return (i, cf),
            (None, Some(cb)) => return (i, cb),
            (None, None) => continue,
        }
    }
    unreachable!("pair not present in any layer")
}

/// Merges the layers into one colored graph: an edge is present iff some
/// layer contains either orientation, and its color comes from the highest
/// priority layer, with the logged coin breaking both-orientation ties.
pub fn merge_to_colored_graph(s: &LayeredSample) -> ColoredGraph {
    let n = n_of(&s.params);
    let mut g = ColoredGraph::new(n, s.params.kappa as u32);
    for (u, v) in all_pairs(&s.layers) {
        let (_, c) = merged_color(&s.layers, &s.coins, u, v);
        g.add_edge(u, v, c).expect("merged edge valid");
    }
    g
}

fn build_class_graphs(
    params: &ParamSet,
    layers: &[ColoredDigraph; 3],
    coins: &BTreeMap<(Vertex, Vertex), bool>,
    src: Option<&RandomSource>,
) -> [ColoredGraph; 3] {
    let n = n_of(params);
    let kappa = params.kappa as u32;
    let mut g = [
        ColoredGraph::new(n, kappa),
        ColoredGraph::new(n, kappa),
        ColoredGraph::new(n, kappa),
    ];
    let in_class = |c: Color, i: usize| params.class_of(c) == Some(i);

    for (u, v) in all_pairs(layers) {
        let d1f = layers[0].arc_color(u, v);
        let d1b = layers[0].arc_color(v, u);
        if d1f.is_some() || d1b.is_some() {
            // All undirected edges arising from the first layer, kept only
            // when the priority-chosen color lies in C_1.
            let chosen = match (d1f, d1b) {
                (Some(cf), Some(cb)) => {
                    if *coins.get(&(u, v)).expect("coin logged") {
                        cf
                    } else {
                        cb
                    }
                }
                (Some(cf), None) => cf,
                (None, Some(cb)) => cb,
                (None, None) => unreachable!(),
            };
            if in_class(chosen, 0) {
                g[0].add_edge(u, v, chosen).expect("valid G1 edge");
            }
            continue;
        }
        // No first-layer presence; second layer rule: the pair must be
        // spanned by exactly one orientation, carrying a C_2 color.
        let d2f = layers[1].arc_color(u, v);
        let d2b = layers[1].arc_color(v, u);
        if d2f.is_some() || d2b.is_some() {
            if let (Some(c), None) = (d2f, d2b) {
                if in_class(c, 1) {
                    g[1].add_edge(u, v, c).expect("valid G2 edge");
                }
            } else if let (None, Some(c)) = (d2f, d2b) {
                if in_class(c, 1) {
                    g[1].add_edge(u, v, c).expect("valid G2 edge");
                }
            }
            continue;
        }
        // Only the third layer touches this pair.
        let d3f = layers[2].arc_color(u, v);
        let d3b = layers[2].arc_color(v, u);
        if let (Some(c), None) = (d3f, d3b) {
            if in_class(c, 2) {
                g[2].add_edge(u, v, c).expect("valid G3 edge");
            }
        } else if let (None, Some(c)) = (d3f, d3b) {
            if in_class(c, 2) {
                g[2].add_edge(u, v, c).expect("valid G3 edge");
            }
        }
    }

    if let Some(src) = src {
        for (i, gi) in g.iter_mut().enumerate() {
            let mut rng = src.stream_indexed("class-graph-order", i as u64);
            gi.shuffle_adjacency(|_, list| list.shuffle(&mut rng));
        }
    }
    g
}

/// The derived subdigraphs `D_i` (arcs whose color lies in `C_i`) and the
/// edge-disjoint class graphs.
pub fn split_color_classes(s: &LayeredSample) -> ([ColoredDigraph; 3], [&ColoredGraph; 3]) {
    let n = n_of(&s.params);
    let kappa = s.params.kappa as u32;
    let mut d = [
        ColoredDigraph::new(n, kappa),
        ColoredDigraph::new(n, kappa),
        ColoredDigraph::new(n, kappa),
    ];
    for i in 0..3 {
        for u in 1..=n {
            for &(v, c) in s.layers[i].out_list(u) {
                if s.params.class_of(c) == Some(i) {
                    d[i].add_arc(u, v, c).expect("valid D_i arc");
                }
            }
        }
    }
    (d, [&s.g[0], &s.g[1], &s.g[2]])
}

impl LayeredSample {
    pub fn n(&self) -> u32 {
        n_of(&self.params)
    }

    /// Whether the arc `(u,v)` of layer `i` carries a class-`i` color.
    pub fn arc_in_class(&self, i: usize, u: Vertex, v: Vertex) -> bool {
        self.layers[i]
            .arc_color(u, v)
            .map(|c| self.params.class_of(c) == Some(i))
            .unwrap_or(false)
    }

    /// Out-entries of `v` in layer `i` restricted to class-`i` colors, in
    /// exposure order, paired with their slot index in the raw out-list.
    pub fn class_out_entries(&self, i: usize, v: Vertex) -> Vec<(u32, Vertex, Color)> {
        self.layers[i]
            .out_list(v)
            .iter()
            .enumerate()
            .filter(|(_, &(_, c))| self.params.class_of(c) == Some(i))
            .map(|(idx, &(t, c))| (idx as u32, t, c))
            .collect()
    }
}

/// Writes the `.lay` layered text format: header `n kappa`, three layer
/// sections with arcs in exposure order, then the coin log.
pub fn write_lay<W: Write>(s: &LayeredSample, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {}", s.n(), s.params.kappa)?;
    for i in 0..3 {
        writeln!(w, "layer {} {}", i + 1, s.layers[i].arc_count())?;
        for u in 1..=s.n() {
            for &(v, c) in s.layers[i].out_list(u) {
                writeln!(w, "{u} {v} {c}")?;
            }
        }
    }
    writeln!(w, "coins {}", s.coins.len())?;
    for (&(u, v), &b) in &s.coins {
        writeln!(w, "{u} {v} {}", u8::from(b))?;
    }
    Ok(())
}

/// Reads the `.lay` format back; arc file order becomes exposure order.
pub fn read_lay<R: BufRead>(params: &ParamSet, reader: R) -> Result<LayeredSample, SampleError> {
    let mut lines = reader.lines().enumerate();
    let (no, header) = lines
        .next()
        .ok_or(SampleError::Parse { line: 1, msg: "empty input".into() })?;
    let header = header?;
    let head: Vec<u64> = header
        .split_whitespace()
        .map(|t| t.parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| SampleError::Parse { line: no + 1, msg: e.to_string() })?;
    if head.len() != 2 || head[0] != params.n || head[1] != params.kappa {
        return Err(SampleError::Parse {
            line: no + 1,
            msg: format!(
                "header {head:?} does not match params (n={}, kappa={})",
                params.n, params.kappa
            ),
        });
    }
    let mut arcs: [Vec<(Vertex, Vertex, Color)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut coins = BTreeMap::new();
    let mut section: Option<usize> = None;
    for (no, line) in lines {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks[0] == "layer" || toks[0] == "coins" {
            let idx = if toks[0] == "coins" {
                3
            } else {
                toks.get(1)
                    .and_then(|t| t.parse::<usize>().ok())
                    .filter(|&i| (1..=3).contains(&i))
                    .ok_or(SampleError::Parse { line: no + 1, msg: "bad layer tag".into() })?
                    - 1
            };
            section = Some(idx);
            continue;
        }
        let idx = section.ok_or(SampleError::Parse {
            line: no + 1,
            msg: "data before section header".into(),
        })?;
        let vals: Vec<u32> = toks
            .iter()
            .map(|t| t.parse::<u32>())
            .collect::<Result<_, _>>()
            .map_err(|e| SampleError::Parse { line: no + 1, msg: e.to_string() })?;
        if vals.len() != 3 {
            return Err(SampleError::Parse { line: no + 1, msg: "expected `u v x`".into() });
        }
        if idx < 3 {
            arcs[idx].push((vals[0], vals[1], vals[2]));
        } else {
            coins.insert((vals[0], vals[1]), vals[2] != 0);
        }
    }
    sample_from_arcs(params, [&arcs[0], &arcs[1], &arcs[2]], coins)
}
