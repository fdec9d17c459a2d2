//! Low-degree vertex sets and their closure under absorption.
//!
//! `S_0` collects the vertices whose out-degree in some `D_i` falls at or
//! below the layer threshold; `S` closes `S_0` by repeatedly absorbing any
//! outside vertex with at least `threshold` out-neighbors inside the set in
//! a single `D_i`. Growth reveals all `D_i` arcs incident to the grown set,
//! leaving per-vertex residual out-degrees with uniformly distributed,
//! still-hidden locations.

use crate::graph::{ColoredGraph, Vertex};
use crate::ledger::{ExposureLedger, LedgerViolation};
use crate::sampler::LayeredSample;
use std::collections::BTreeSet;

/// The low-degree seed sets of the three layers.
#[derive(Debug, Clone)]
pub struct S0Sets {
    pub parts: [Vec<Vertex>; 3],
    pub union: Vec<Vertex>,
}

/// Thresholds use natural log and non-strict comparison: boundary equality
/// counts as dangerous.
pub fn compute_s0(s: &LayeredSample, ledger: &mut ExposureLedger) -> S0Sets {
    let n = s.n();
    let mut parts: [Vec<Vertex>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut union = BTreeSet::new();
    for v in 1..=n {
        for i in 0..3 {
            ledger.reveal_degree(i as u8, v);
            let d = s.d_plus[(v - 1) as usize][i];
            if f64::from(d) <= s.params.s0_threshold(i) {
                parts[i].push(v);
                union.insert(v);
            }
        }
    }
    S0Sets {
        parts,
        union: union.into_iter().collect(),
    }
}

/// One absorption event: the vertex and the layer that reached the
/// threshold at the moment of absorption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Absorption {
    pub vertex: Vertex,
    pub layer: u8,
}

#[derive(Debug, Clone)]
pub struct DangerousSets {
    pub s0: S0Sets,
    /// Final grown set, sorted.
    pub s: Vec<Vertex>,
    pub in_s: Vec<bool>,
    pub absorption_order: Vec<Absorption>,
    pub threshold: u32,
    /// Residual out-degree `d_i^*(v)` per layer for `v` outside `S`
    /// (class-`i` out-arcs whose target is outside `S`).
    pub residual: Vec<[u32; 3]>,
    /// Slots (indices into the raw out-lists) of the residual class-`i`
    /// out-arcs, in exposure order.
    pub residual_slots: Vec<[Vec<u32>; 3]>,
    /// Directed edges of `D_1 ∪ D_2 ∪ D_3` spanned by `S`.
    pub edges_inside: u64,
    /// Vertices with low degree in `G_2`, attached separately.
    pub s00: Vec<Vertex>,
    pub in_s00: Vec<bool>,
}

impl DangerousSets {
    pub fn contains(&self, v: Vertex) -> bool {
        self.in_s[(v - 1) as usize]
    }

    pub fn contains_s00(&self, v: Vertex) -> bool {
        self.in_s00[(v - 1) as usize]
    }
}

/// Grows `S` from `S_0` with a worklist, absorbing eligible vertices in
/// ascending id. Reveals all `D_i` arc locations incident to the final set
/// and computes residual counts for the survivors.
pub fn grow_s(
    s: &LayeredSample,
    s0: &S0Sets,
    threshold: u32,
    ledger: &mut ExposureLedger,
) -> Result<DangerousSets, LedgerViolation> {
    grow_s_with_order(s, s0, threshold, ledger, |ready| *ready.iter().next().unwrap())
}

/// Growth with a pluggable choice among currently eligible vertices; the
/// fixed point is order-insensitive, which tests exercise directly.
pub fn grow_s_with_order<F>(
    s: &LayeredSample,
    s0: &S0Sets,
    threshold: u32,
    ledger: &mut ExposureLedger,
    mut pick: F,
) -> Result<DangerousSets, LedgerViolation>
where
    F: FnMut(&BTreeSet<Vertex>) -> Vertex,
{
    let n = s.n() as usize;
    let mut in_s = vec![false; n];
    // counts[i][v-1]: class-i out-arcs from v into the current set
    let mut counts = [vec![0u32; n], vec![0u32; n], vec![0u32; n]];
    let mut order = Vec::new();
    let mut ready: BTreeSet<Vertex> = BTreeSet::new();

    let trigger_layer = |counts: &[Vec<u32>; 3], v: Vertex| -> Option<u8> {
        (0..3).find(|&i| counts[i][(v - 1) as usize] >= threshold).map(|i| i as u8)
    };

    let mut pending: Vec<Vertex> = s0.union.clone();
    let mut queued = vec![false; n];
    for &v in &pending {
        queued[(v - 1) as usize] = true;
    }
    let mut head = 0;
    loop {
        // Flush newly-added members, updating in-neighbor counts.
        while head < pending.len() {
            let w = pending[head];
            head += 1;
            if in_s[(w - 1) as usize] {
                continue;
            }
            in_s[(w - 1) as usize] = true;
            ready.remove(&w);
            for i in 0..3 {
                for &v in &s.rev[i][(w - 1) as usize] {
                    if !in_s[(v - 1) as usize] {
                        counts[i][(v - 1) as usize] += 1;
                        if counts[i][(v - 1) as usize] >= threshold {
                            ready.insert(v);
                        }
                    }
                }
            }
        }
        // Absorb one eligible vertex; re-check since counts move on.
        let next = loop {
            match ready.iter().next().copied() {
                None => break None,
                Some(_) => {
                    let v = pick(&ready);
                    ready.remove(&v);
                    debug_assert!(!in_s[(v - 1) as usize]);
                    match trigger_layer(&counts, v) {
                        Some(layer) => break Some((v, layer)),
                        None => continue,
                    }
                }
            }
        };
        match next {
            Some((v, layer)) => {
                order.push(Absorption { vertex: v, layer });
                if !queued[(v - 1) as usize] {
                    queued[(v - 1) as usize] = true;
                }
                pending.push(v);
            }
            None => break,
        }
    }

    // Fixed point reached: no outside vertex has `threshold` class-i
    // out-neighbors inside in any layer.
    let s_sorted: Vec<Vertex> = (1..=s.n()).filter(|&v| in_s[(v - 1) as usize]).collect();

    // Reveal every D_i arc incident to S and compute residuals.
    let mut residual = vec![[0u32; 3]; n];
    let mut residual_slots: Vec<[Vec<u32>; 3]> =
        (0..n).map(|_| [Vec::new(), Vec::new(), Vec::new()]).collect();
    let mut edges_inside = 0u64;
    for v in 1..=s.n() {
        for i in 0..3 {
            for (slot, t, _c) in s.class_out_entries(i, v) {
                let v_in = in_s[(v - 1) as usize];
                let t_in = in_s[(t - 1) as usize];
                if v_in || t_in {
                    ledger.reveal_arc_location_idempotent(i as u8, v, slot);
                    if v_in && t_in {
                        edges_inside += 1;
                    }
                }
                if !v_in && !t_in {
                    residual[(v - 1) as usize][i] += 1;
                    residual_slots[(v - 1) as usize][i].push(slot);
                }
            }
        }
    }

    Ok(DangerousSets {
        s0: s0.clone(),
        s: s_sorted,
        in_s,
        absorption_order: order,
        threshold,
        residual,
        residual_slots,
        edges_inside,
        s00: Vec::new(),
        in_s00: vec![false; n],
    })
}

/// Vertices of low degree in `G_2`: `d_2(v) <= (log n) / 10`.
pub fn compute_s00(g2: &ColoredGraph) -> Vec<Vertex> {
    let cutoff = f64::from(g2.n()).ln() / 10.0;
    g2.vertices()
        .filter(|&v| (g2.degree(v) as f64) <= cutoff)
        .collect()
}

impl DangerousSets {
    pub fn attach_s00(&mut self, s00: Vec<Vertex>) {
        let mut flags = vec![false; self.in_s.len()];
        for &v in &s00 {
            flags[(v - 1) as usize] = true;
        }
        self.s00 = s00;
        self.in_s00 = flags;
    }
}

/// Smallest `G_2`-distance between distinct members of `a`; `None` means no
/// finite pairwise distance exists (fewer than two members or all pairs
/// disconnected). `cap` truncates the search: distances above it report as
/// `None`, which is all the separation diagnostic needs.
pub fn min_pairwise_distance(g2: &ColoredGraph, a: &[Vertex], cap: Option<u32>) -> Option<u32> {
    if a.len() < 2 {
        return None;
    }
    let n = g2.n() as usize;
    let in_a: Vec<bool> = {
        let mut f = vec![false; n];
        for &v in a {
            f[(v - 1) as usize] = true;
        }
        f
    };
    let mut best: Option<u32> = None;
    let mut dist = vec![u32::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for &src in a {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[(src - 1) as usize] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[(u - 1) as usize];
            if let Some(b) = best {
                if du + 1 >= b {
                    continue;
                }
            }
            if let Some(c) = cap {
                if du + 1 > c {
                    continue;
                }
            }
            for &(w, _) in g2.neighbors(u) {
                if dist[(w - 1) as usize] == u32::MAX {
                    dist[(w - 1) as usize] = du + 1;
                    if in_a[(w - 1) as usize] && w != src {
                        let d = du + 1;
                        if best.map_or(true, |b| d < b) {
                            best = Some(d);
                        }
                    }
                    queue.push_back(w);
                }
            }
        }
    }
    match (best, cap) {
        (Some(b), Some(c)) if b > c => None,
        (b, _) => b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_parameters, params_from_overrides, ParamSet};
    use crate::rng::RandomSource;
    use crate::sampler::{sample_from_arcs, sample_layered};
    use std::collections::BTreeMap;

    fn ledger() -> ExposureLedger {
        ExposureLedger::new(true)
    }

    /// Params whose S_0 layer-1 threshold is exactly 0.5 at n = 6 and whose
    /// color classes are easy to hit by hand.
    fn hand_params() -> ParamSet {
        // thresholds: layer 1 and 3 use eps_i * theta_i / 20 * ln n.
        // Choose overrides so eps_1 * theta_1 = 10 / ln 6 -> threshold 0.5.
        let n = 6u64;
        let ln_n = 6f64.ln();
        // eps_1 = 2 n p_1 / ln n: pick p_1 so eps_1 * theta_1 = 10 / ln 6.
        // kappa = 24 gives theta = 3; p_2 makes eps_2 = 4, so theta_1 =
        // min(theta/3, eps_2/4) = 1 and the layer-1 threshold is exactly 0.5.
        let p1 = (10.0 / ln_n) * ln_n / (2.0 * n as f64);
        let p2 = 5.0 * ln_n / (2.0 * n as f64);
        params_from_overrides(n, [p1, p2, p1], 24, None).unwrap()
    }

    #[test]
    fn empty_layers_make_every_vertex_dangerous() {
        let p = params_from_overrides(8, [0.0, 0.0, 0.0], 16, None).unwrap();
        let s = sample_layered(&p, &RandomSource::new(1));
        let s0 = compute_s0(&s, &mut ledger());
        assert_eq!(s0.union.len(), 8);
    }

    #[test]
    fn hand_listed_arcs_match_threshold_comparison() {
        let p = hand_params();
        assert!(
            (p.s0_threshold(0) - 0.5).abs() < 0.01,
            "threshold = {}",
            p.s0_threshold(0)
        );
        let c1 = *p.class_range(0).start();
        let c2 = *p.class_range(1).start();
        let c3 = *p.class_range(2).start();
        // Layer 1: vertices 1,2 have one class-1 out-arc each; 3..6 none.
        // Layer 2/3: give everyone one arc so only layer 1 decides.
        let l1 = vec![(1, 2, c1), (2, 3, c1)];
        let mut l2 = Vec::new();
        let mut l3 = Vec::new();
        for v in 1..=6u32 {
            let t = if v == 6 { 1 } else { v + 1 };
            l2.push((v, t, c2));
            l3.push((v, t, c3));
        }
        let s = sample_from_arcs(&p, [&l1, &l2, &l3], BTreeMap::new()).unwrap();
        // Layer-2 threshold is ln6/20 = 0.09, layer-3 matches layer 1 scale;
        // with one arc each nobody is dangerous there unless threshold >= 1.
        assert!(p.s0_threshold(1) < 1.0);
        let s0 = compute_s0(&s, &mut ledger());
        // d_1^+ = 1 > 0.5 for vertices 1,2; = 0 <= 0.5 for 3..6.
        assert_eq!(s0.parts[0], vec![3, 4, 5, 6]);
        if p.s0_threshold(2) < 1.0 {
            // everyone has one layer-3 arc, so none flagged there
            assert!(s0.parts[2].is_empty());
        }
        assert_eq!(s0.union, vec![3, 4, 5, 6]);
    }

    #[test]
    fn grow_from_empty_seed_is_empty() {
        let p = derive_parameters(20, 0.3, 0.3, Some(4)).unwrap();
        let s = sample_layered(&p, &RandomSource::new(5));
        let s0 = S0Sets { parts: [vec![], vec![], vec![]], union: vec![] };
        let ds = grow_s(&s, &s0, 4, &mut ledger()).unwrap();
        assert!(ds.s.is_empty());
        assert!(ds.absorption_order.is_empty());
    }

    #[test]
    fn star_absorption_at_threshold_boundary() {
        // Vertex 6 with class-2 out-arcs into seed {1,2,3,4}.
        let p = params_from_overrides(6, [0.1, 0.1, 0.1], 24, None).unwrap();
        let c2 = *p.class_range(1).start();
        let arcs4: Vec<_> = (1..=4u32).map(|t| (6u32, t, c2)).collect();
        let s = sample_from_arcs(&p, [&[], &arcs4, &[]], BTreeMap::new()).unwrap();
        let seed = S0Sets {
            parts: [vec![], vec![1, 2, 3, 4], vec![]],
            union: vec![1, 2, 3, 4],
        };
        let ds = grow_s(&s, &seed, 4, &mut ledger()).unwrap();
        assert!(ds.contains(6), "four out-arcs into the seed absorb at threshold 4");
        assert_eq!(ds.absorption_order, vec![Absorption { vertex: 6, layer: 1 }]);

        // Only three arcs: not absorbed at 4, absorbed at 3.
        let arcs3 = &arcs4[..3];
        let s = sample_from_arcs(&p, [&[], arcs3, &[]], BTreeMap::new()).unwrap();
        let ds4 = grow_s(&s, &seed, 4, &mut ledger()).unwrap();
        assert!(!ds4.contains(6));
        let ds3 = grow_s(&s, &seed, 3, &mut ledger()).unwrap();
        assert!(ds3.contains(6));
    }

    #[test]
    fn growth_is_idempotent_and_monotone_in_threshold() {
        let p = derive_parameters(60, 0.9, 0.9, Some(4)).unwrap();
        for seed in 0..10u64 {
            let s = sample_layered(&p, &RandomSource::new(seed));
            let s0 = compute_s0(&s, &mut ledger());
            let ds4 = grow_s(&s, &s0, 4, &mut ledger()).unwrap();
            let ds3 = grow_s(&s, &s0, 3, &mut ledger()).unwrap();
            // containment: the threshold-4 set lies inside the threshold-3 set
            for &v in &ds4.s {
                assert!(ds3.contains(v));
            }
            // idempotence: regrowing from the fixed point adds nothing
            let again = S0Sets { parts: [vec![], vec![], vec![]], union: ds4.s.clone() };
            let ds4b = grow_s(&s, &again, 4, &mut ledger()).unwrap();
            assert_eq!(ds4.s, ds4b.s);
        }
    }

    #[test]
    fn fixed_point_is_order_insensitive() {
        use rand::seq::IteratorRandom;
        let p = derive_parameters(40, 0.9, 0.9, Some(4)).unwrap();
        for seed in 0..5u64 {
            let s = sample_layered(&p, &RandomSource::new(seed));
            let s0 = compute_s0(&s, &mut ledger());
            let base = grow_s(&s, &s0, 4, &mut ledger()).unwrap();
            for order_seed in 0..4u64 {
                let mut rng = RandomSource::new(order_seed).stream("order");
                let ds = grow_s_with_order(&s, &s0, 4, &mut ledger(), |ready| {
                    *ready.iter().choose(&mut rng).unwrap()
                })
                .unwrap();
                assert_eq!(base.s, ds.s, "fixed point depends on absorption order");
            }
        }
    }

    #[test]
    fn residuals_respect_consumption_bound() {
        let p = derive_parameters(80, 0.9, 0.9, Some(4)).unwrap();
        let s = sample_layered(&p, &RandomSource::new(3));
        let s0 = compute_s0(&s, &mut ledger());
        let ds = grow_s(&s, &s0, 4, &mut ledger()).unwrap();
        for v in 1..=s.n() {
            if ds.contains(v) {
                continue;
            }
            for i in 0..3 {
                let d = s.d_plus[(v - 1) as usize][i];
                let r = ds.residual[(v - 1) as usize][i];
                // at most threshold-1 out-arcs point into S per layer
                assert!(r + (ds.threshold - 1) >= d, "v={v} layer={i}: r={r}, d={d}");
                assert_eq!(
                    ds.residual_slots[(v - 1) as usize][i].len(),
                    r as usize
                );
            }
        }
    }

    #[test]
    fn absorption_order_replays() {
        let p = derive_parameters(60, 0.9, 0.9, Some(4)).unwrap();
        let s = sample_layered(&p, &RandomSource::new(17));
        let s0 = compute_s0(&s, &mut ledger());
        let ds = grow_s(&s, &s0, 4, &mut ledger()).unwrap();
        // Replay: maintain the set, check each absorbed vertex really had
        // >= threshold class-layer out-neighbors inside at its moment.
        let mut in_set = vec![false; s.n() as usize];
        for &v in &s0.union {
            in_set[(v - 1) as usize] = true;
        }
        for a in &ds.absorption_order {
            let count = s
                .class_out_entries(a.layer as usize, a.vertex)
                .iter()
                .filter(|&&(_, t, _)| in_set[(t - 1) as usize])
                .count();
            assert!(count >= ds.threshold as usize);
            in_set[(a.vertex - 1) as usize] = true;
        }
    }

    #[test]
    fn s00_threshold_cases() {
        // Empty G_2: every vertex qualifies.
        let g = ColoredGraph::new(5, 5);
        assert_eq!(compute_s00(&g).len(), 5);
        // n = 3 with a triangle: ln(3)/10 < 1, all degrees 2 -> none.
        let mut g = ColoredGraph::new(3, 3);
        g.add_edge(1, 2, 1).unwrap();
        g.add_edge(2, 3, 2).unwrap();
        g.add_edge(1, 3, 3).unwrap();
        assert!(compute_s00(&g).is_empty());
        // Hand-listed 6-vertex graph: threshold ln(6)/10 ~ 0.179, so only
        // isolated vertices qualify.
        let mut g = ColoredGraph::new(6, 6);
        g.add_edge(1, 2, 1).unwrap();
        g.add_edge(3, 4, 2).unwrap();
        assert_eq!(compute_s00(&g), vec![5, 6]);
    }

    #[test]
    fn pairwise_distance_cases() {
        let mut g = ColoredGraph::new(6, 6);
        // path 1-2-3-4-5
        for v in 1..5u32 {
            g.add_edge(v, v + 1, v).unwrap();
        }
        assert_eq!(min_pairwise_distance(&g, &[2], None), None);
        assert_eq!(min_pairwise_distance(&g, &[1, 2], None), Some(1));
        assert_eq!(min_pairwise_distance(&g, &[1, 5], None), Some(4));
        // disconnected pair
        assert_eq!(min_pairwise_distance(&g, &[1, 6], None), None);
        // cap truncation
        assert_eq!(min_pairwise_distance(&g, &[1, 5], Some(3)), None);
        assert_eq!(min_pairwise_distance(&g, &[1, 5], Some(4)), Some(4));
    }

    #[test]
    fn growth_density_lower_bound() {
        // Each threshold-3 absorption introduces at least 3 edges inside.
        let p = derive_parameters(80, 1.2, 1.2, Some(4)).unwrap();
        for seed in 0..5u64 {
            let s = sample_layered(&p, &RandomSource::new(seed));
            let s0 = compute_s0(&s, &mut ledger());
            let ds = grow_s(&s, &s0, 3, &mut ledger()).unwrap();
            assert!(
                ds.edges_inside >= 3 * ds.absorption_order.len() as u64,
                "e(S) = {} < 3 * {}",
                ds.edges_inside,
                ds.absorption_order.len()
            );
        }
    }
}
