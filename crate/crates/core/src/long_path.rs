//! Greedy backtracking construction of a long rainbow path in the middle
//! color-class graph, restricted to vertices outside the dangerous set and
//! the covering paths.
//!
//! The walk exposes each vertex's hidden out-arcs in two halves: the first
//! half while the vertex is a live endpoint, the second after it turns red.
//! An extension to `w` must land in the untouched set via a fresh color and
//! survive three membership probes (either orientation in layer 1, reverse
//! in layer 2), which is exactly membership of the edge in `G_2`. Exhausted
//! endpoints turn red; backtracking retreats to the last non-red vertex,
//! dropping the red suffix from the path.

use crate::cover::{ColorSet, PathCover};
use crate::dangerous::DangerousSets;
use crate::graph::{Color, Vertex};
use crate::ledger::{ExposureLedger, LedgerViolation};
use crate::sampler::LayeredSample;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RainbowPath {
    pub vertices: Vec<Vertex>,
    /// Edge colors; `colors[i]` joins `vertices[i]` and `vertices[i+1]`.
    pub colors: Vec<Color>,
}

impl RainbowPath {
    pub fn len_edges(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RedReport {
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct LongPathOutcome {
    pub path: RainbowPath,
    pub red: RedReport,
    /// Untouched vertices at termination, ascending.
    pub untouched: Vec<Vertex>,
    /// Vertices of the walk's ground set that ended up neither on the path
    /// nor untouched (red vertices dropped along the way), ascending.
    pub off_path: Vec<Vertex>,
    /// Edge-length target `n - n / cbrt(log n)`.
    pub target: f64,
    /// True when the untouched-set stopping rule exceeded the ground set
    /// and the walk ran until exhaustion instead.
    pub degenerate: bool,
}

#[derive(Debug, Error, Clone, Serialize)]
#[error("long path reached {achieved} edges (target {target:.2}), {red} red vertices")]
pub struct LongPathFailure {
    pub achieved: usize,
    pub target: f64,
    pub red: usize,
}

#[derive(Debug, Error)]
pub enum LongPathError {
    #[error(transparent)]
    Ledger(#[from] LedgerViolation),
    #[error(transparent)]
    Failed(#[from] LongPathFailure),
}

struct Walk<'a> {
    s: &'a LayeredSample,
    ds: &'a DangerousSets,
    used: &'a mut ColorSet,
    ledger: &'a mut ExposureLedger,
    choice_rng: Option<&'a mut ChaCha12Rng>,
    in_u: Vec<bool>,
    u_count: usize,
    on_path: Vec<bool>,
    red: Vec<bool>,
    red_count: usize,
    path: Vec<Vertex>,
    colors: Vec<Color>,
    exposed_first: Vec<bool>,
    exposed_second: Vec<bool>,
}

impl Walk<'_> {
    fn idx(v: Vertex) -> usize {
        (v - 1) as usize
    }

    /// Half boundary: the first ceil(d/2) residual slots.
    fn half_split(&self, v: Vertex) -> usize {
        let d = self.ds.residual[Self::idx(v)][1] as usize;
        d.div_ceil(2)
    }

    fn expose_half(&mut self, v: Vertex, second: bool) -> Result<(), LedgerViolation> {
        let slots = &self.ds.residual_slots[Self::idx(v)][1];
        let mid = self.half_split(v);
        let range = if second { mid..slots.len() } else { 0..mid };
        for &slot in &slots[range] {
            // Each half is revealed at most once per walk (guarded by the
            // exposure flags below); a retried walk re-reads what an
            // earlier attempt already exposed, and probes may have pinned
            // individual locations before.
            self.ledger.reveal_arc_location_idempotent(1, v, slot);
            self.ledger.reveal_arc_color_idempotent(1, v, slot);
        }
        if second {
            self.exposed_second[Self::idx(v)] = true;
        } else {
            self.exposed_first[Self::idx(v)] = true;
        }
        Ok(())
    }

    /// Suitable candidates in the given exposed half: untouched target via a
    /// fresh color, in exposure order.
    fn candidates(&self, v: Vertex, second: bool) -> Vec<(Vertex, Color)> {
        let slots = &self.ds.residual_slots[Self::idx(v)][1];
        let mid = self.half_split(v);
        let range = if second { mid..slots.len() } else { 0..mid };
        let out = self.s.layers[1].out_list(v);
        slots[range.clone()]
            .iter()
            .map(|&slot| out[slot as usize])
            .filter(|&(w, c)| self.in_u[Self::idx(w)] && !self.used.contains(c))
            .collect()
    }

    fn pick<'c>(&mut self, cands: &'c [(Vertex, Color)]) -> (Vertex, Color) {
        match self.choice_rng.as_deref_mut() {
            Some(rng) => cands[rng.gen_range(0..cands.len())],
            None => cands[0],
        }
    }

    fn mark_red(&mut self, v: Vertex) {
        if !self.red[Self::idx(v)] {
            self.red[Self::idx(v)] = true;
            self.red_count += 1;
        }
    }

    /// Probes the three conflicting arcs; true means the extension stands
    /// (the undirected edge really belongs to `G_2`).
    fn probe_extension(&mut self, v: Vertex, w: Vertex) -> Result<bool, LedgerViolation> {
        let mut conflict = false;
        for (layer, a, b) in [(0u8, v, w), (0u8, w, v), (1u8, w, v)] {
            let present = self.s.layers[layer as usize].has_arc(a, b);
            self.ledger.probe_pair(layer, a, b, present)?;
            if present {
                if let Some(slot) = self.s.layers[layer as usize].arc_slot(a, b) {
                    self.ledger.reveal_arc_location_idempotent(layer, a, slot);
                }
                conflict = true;
            }
        }
        Ok(!conflict)
    }

    fn take_from_u(&mut self, w: Vertex) {
        debug_assert!(self.in_u[Self::idx(w)]);
        self.in_u[Self::idx(w)] = false;
        self.u_count -= 1;
    }

    fn extend_path(&mut self, w: Vertex, c: Color) {
        self.path.push(w);
        self.colors.push(c);
        self.on_path[Self::idx(w)] = true;
        let fresh = self.used.insert(c);
        debug_assert!(fresh);
    }

    /// Retreat to the last non-red vertex, dropping the red suffix from the
    /// path; the new terminus turns red. Colors of dropped edges return to
    /// the pool (the rainbow constraint only binds the current path).
    /// Returns false when the whole path was red and a restart is needed.
    fn backtrack(&mut self) -> bool {
        let last_alive = self.path.iter().rposition(|&v| !self.red[Self::idx(v)]);
        match last_alive {
            Some(i) => {
                for &v in &self.path[i + 1..] {
                    debug_assert!(self.red[Self::idx(v)]);
                    self.on_path[Self::idx(v)] = false;
                }
                for &c in &self.colors[i..] {
                    self.used.remove(c);
                }
                self.path.truncate(i + 1);
                self.colors.truncate(i);
                let v = self.path[i];
                self.mark_red(v);
                true
            }
            None => {
                for &v in &self.path {
                    self.on_path[Self::idx(v)] = false;
                }
                for &c in &self.colors {
                    self.used.remove(c);
                }
                self.path.clear();
                self.colors.clear();
                false
            }
        }
    }

    fn restart(&mut self) -> bool {
        if self.u_count == 0 {
            return false;
        }
        let v = match self.choice_rng.as_deref_mut() {
            Some(rng) => {
                let k = rng.gen_range(0..self.u_count);
                (1..)
                    .filter(|&v| self.in_u[Self::idx(v)])
                    .nth(k)
                    .unwrap()
            }
            None => (1..).find(|&v| self.in_u[Self::idx(v)]).unwrap(),
        };
        self.take_from_u(v);
        self.path.push(v);
        self.on_path[Self::idx(v)] = true;
        true
    }
}

/// Runs the walk. Succeeds when the final path length reaches
/// `n - n/cbrt(log n)`; in degenerate mode (ground set at or below the
/// stopping threshold) any non-trivial path is reported and the caller
/// decides. The failure value carries the achieved length and red count.
pub fn build_long_path(
    s: &LayeredSample,
    ds: &DangerousSets,
    cover: &PathCover,
    used_colors: &mut ColorSet,
    ledger: &mut ExposureLedger,
    choice_rng: Option<&mut ChaCha12Rng>,
) -> Result<LongPathOutcome, LongPathError> {
    let n = s.n();
    let nf = n as f64;
    let cover_flags = cover.vertex_flags(n);
    let mut in_v2 = vec![false; n as usize];
    for v in 1..=n {
        let i = (v - 1) as usize;
        in_v2[i] = !ds.contains(v) && !cover_flags[i];
    }
    let v2_size = in_v2.iter().filter(|&&b| b).count();

    let mut u_threshold = nf / (2.0 * nf.ln().cbrt());
    let degenerate = u_threshold >= v2_size as f64;
    if degenerate {
        u_threshold = 0.0;
    }
    let target = nf - nf / nf.ln().cbrt();

    let mut walk = Walk {
        s,
        ds,
        used: used_colors,
        ledger,
        choice_rng,
        in_u: in_v2.clone(),
        u_count: v2_size,
        on_path: vec![false; n as usize],
        red: vec![false; n as usize],
        red_count: 0,
        path: Vec::new(),
        colors: Vec::new(),
        exposed_first: vec![false; n as usize],
        exposed_second: vec![false; n as usize],
    };

    if !walk.restart() {
        return Err(LongPathFailure { achieved: 0, target, red: 0 }.into());
    }

    loop {
        if (walk.u_count as f64) < u_threshold || walk.u_count == 0 {
            break;
        }
        let v = *walk.path.last().expect("path never empty inside the loop");
        let vi = Walk::idx(v);
        if !walk.red[vi] {
            if !walk.exposed_first[vi] {
                walk.expose_half(v, false).map_err(LongPathError::Ledger)?;
            }
            let cands = walk.candidates(v, false);
            if cands.is_empty() {
                walk.mark_red(v);
                continue;
            }
            let (w, c) = walk.pick(&cands);
            walk.take_from_u(w);
            if walk.probe_extension(v, w).map_err(LongPathError::Ledger)? {
                walk.extend_path(w, c);
            } else {
                walk.mark_red(v);
                walk.mark_red(w);
            }
        } else {
            if !walk.exposed_second[vi] {
                walk.expose_half(v, true).map_err(LongPathError::Ledger)?;
            }
            let cands = walk.candidates(v, true);
            if cands.is_empty() {
                if !walk.backtrack() && !walk.restart() {
                    break;
                }
                continue;
            }
            let (w, c) = walk.pick(&cands);
            walk.take_from_u(w);
            if walk.probe_extension(v, w).map_err(LongPathError::Ledger)? {
                walk.extend_path(w, c);
            } else {
                walk.mark_red(w);
                if !walk.backtrack() && !walk.restart() {
                    break;
                }
            }
        }
    }

    // Every non-red vertex of the ground set that left the untouched pool
    // sits on the final path.
    debug_assert!((1..=n).all(|v| {
        let i = (v - 1) as usize;
        !in_v2[i] || walk.in_u[i] || walk.red[i] || walk.on_path[i]
    }));

    let untouched: Vec<Vertex> = (1..=n).filter(|&v| walk.in_u[Walk::idx(v)]).collect();
    let off_path: Vec<Vertex> = (1..=n)
        .filter(|&v| {
            let i = Walk::idx(v);
            in_v2[i] && !walk.in_u[i] && !walk.on_path[i]
        })
        .collect();
    let outcome = LongPathOutcome {
        path: RainbowPath { vertices: walk.path, colors: walk.colors },
        red: RedReport { count: walk.red_count },
        untouched,
        off_path,
        target,
        degenerate,
    };
    let achieved = outcome.path.len_edges();
    if !degenerate && (achieved as f64) < target {
        return Err(LongPathFailure { achieved, target, red: outcome.red.count }.into());
    }
    if degenerate && outcome.path.vertices.len() < 2 {
        return Err(LongPathFailure { achieved, target, red: outcome.red.count }.into());
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RedDiagnostic {
    pub observed: usize,
    pub bound: f64,
    pub within: bool,
}

/// Compares the observed red count against `n * exp(-(1/300) (log n)^{1/3})`.
pub fn red_fraction_diagnostic(report: &RedReport, n: u64) -> RedDiagnostic {
    let nf = n as f64;
    let bound = nf * (-(nf.ln().cbrt()) / 300.0).exp();
    RedDiagnostic {
        observed: report.count,
        bound,
        within: (report.count as f64) <= bound,
    }
}
