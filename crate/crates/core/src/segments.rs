//! Segment system built from the long path: split into length-`L`
//! intervals with an alternating A/B endpoint partition, absorb every
//! leftover path and vertex through fresh-colored third-layer edges, keep
//! the block structure (maximal runs of segments joined by original path
//! edges, with good type-A extremes), and merge away bad endpoints.
//!
//! An absorption cuts two host intervals at interior vertices `x`, `y`
//! whose neighbors toward the B side are good, threads the unit between
//! them, and continues through the A-endpoint of the second host into the
//! adjacent interval up to its B-endpoint. The severed tails become new
//! intervals whose fresh endpoints are those good neighbors, so the B side
//! of the partition never changes and the A side keeps its size.

use crate::cover::{ColorSet, CoverPath};
use crate::dangerous::DangerousSets;
use crate::graph::{Color, Vertex};
use crate::ledger::{CountTag, ExposureLedger, LedgerViolation};
use crate::long_path::RainbowPath;
use crate::sampler::LayeredSample;
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

pub type SegId = usize;

/// Which end of a segment's vertex sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum End {
    Front,
    Back,
}

impl End {
    fn other(self) -> End {
        match self {
            End::Front => End::Back,
            End::Back => End::Front,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub vertices: Vec<Vertex>,
    /// Internal edge colors; `colors[i]` joins `vertices[i]`, `vertices[i+1]`.
    pub colors: Vec<Color>,
    /// Whether the A-endpoint sits at the front of `vertices`.
    pub a_first: bool,
    /// Original interval index along the path; `None` once cut or merged.
    pub orig_index: Option<usize>,
    /// Original-path joins to neighboring segments, by end.
    pub link_front: Option<(SegId, End)>,
    pub link_back: Option<(SegId, End)>,
}

impl Segment {
    pub fn a_endpoint(&self) -> Vertex {
        if self.a_first {
            self.vertices[0]
        } else {
            *self.vertices.last().unwrap()
        }
    }

    pub fn b_endpoint(&self) -> Vertex {
        if self.a_first {
            *self.vertices.last().unwrap()
        } else {
            self.vertices[0]
        }
    }

    fn end_vertex(&self, end: End) -> Vertex {
        match end {
            End::Front => self.vertices[0],
            End::Back => *self.vertices.last().unwrap(),
        }
    }

    fn end_of_a(&self) -> End {
        if self.a_first {
            End::Front
        } else {
            End::Back
        }
    }

    fn link(&self, end: End) -> Option<(SegId, End)> {
        match end {
            End::Front => self.link_front,
            End::Back => self.link_back,
        }
    }

    fn set_link(&mut self, end: End, to: Option<(SegId, End)>) {
        match end {
            End::Front => self.link_front = to,
            End::Back => self.link_back = to,
        }
    }

    /// Vertices and colors oriented from the A-endpoint to the B-endpoint.
    pub fn traverse_a_to_b(&self) -> (Vec<Vertex>, Vec<Color>) {
        if self.a_first {
            (self.vertices.clone(), self.colors.clone())
        } else {
            (
                self.vertices.iter().rev().copied().collect(),
                self.colors.iter().rev().copied().collect(),
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EndpointStage {
    A1B1,
    A2B2,
    A3B3,
}

/// A leftover unit awaiting absorption: a covering path, a discarded piece
/// of the long path, or a single vertex.
#[derive(Debug, Clone)]
pub struct Unit {
    pub vertices: Vec<Vertex>,
    pub colors: Vec<Color>,
    pub kind: UnitKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UnitKind {
    CoverPath,
    PathRemainder,
    Single,
}

impl Unit {
    pub fn single(v: Vertex) -> Self {
        Unit { vertices: vec![v], colors: vec![], kind: UnitKind::Single }
    }

    pub fn from_cover_path(p: &CoverPath) -> Self {
        Unit {
            vertices: p.vertices.clone(),
            colors: p.colors.clone(),
            kind: UnitKind::CoverPath,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AbsorbReason {
    NoUsableG3Arc,
    ColorExhausted,
    NoSeparatedHost,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("path of {len} vertices is too short to split into intervals of length {l}")]
    PathTooShort { len: usize, l: u32 },
    #[error("cannot absorb leftover unit {unit}: {reason:?}")]
    Absorb { unit: usize, reason: AbsorbReason },
    #[error("cannot make endpoint {vertex} good by merging")]
    Merge { vertex: Vertex },
    #[error(transparent)]
    Ledger(#[from] LedgerViolation),
}

#[derive(Debug, Clone)]
pub struct SegmentSystem {
    pub segments: Vec<Option<Segment>>,
    pub stage: EndpointStage,
    pub l: u32,
    /// Frozen first-stage B side (the absorption step never changes it).
    pub b1: BTreeSet<Vertex>,
    /// Goodness of `d_1^+(v; B_1)` at the construction threshold.
    pub b1_good: HashMap<Vertex, bool>,
    pub counts_b1: HashMap<Vertex, u32>,
    /// Goodness of `d_1^+(b; A_2)` for B-endpoints.
    pub a2_good: HashMap<Vertex, bool>,
    pub counts_a2: HashMap<Vertex, u32>,
    /// Final revealed counts toward the surviving sides; these drive the
    /// auxiliary linking digraph.
    pub counts_final_out: HashMap<Vertex, u32>,
    pub counts_final_in: HashMap<Vertex, u32>,
    /// Original-interval indices consumed by absorption (hosts and
    /// continuations); separation keeps an index gap of at least 2.
    pub used_orig: BTreeSet<usize>,
    /// Colors of all original path edges, by canonical pair.
    pedge: HashMap<(Vertex, Vertex), Color>,
    /// Vertex -> (segment, position).
    locate: HashMap<Vertex, (SegId, usize)>,
    pub absorb_count: usize,
    pub merge_count: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub enum ExposeSide {
    /// Step-1 exposure: counts from every segment vertex toward `B_1`.
    TowardB,
    /// Step-4 exposure: counts from B-endpoints toward the current A side.
    TowardA,
}

fn canon(u: Vertex, v: Vertex) -> (Vertex, Vertex) {
    (u.min(v), u.max(v))
}

impl SegmentSystem {
    pub fn live(&self) -> impl Iterator<Item = (SegId, &Segment)> {
        self.segments
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
    }

    pub fn live_count(&self) -> usize {
        self.segments.iter().filter(|s| s.is_some()).count()
    }

    pub fn seg(&self, id: SegId) -> &Segment {
        self.segments[id].as_ref().expect("live segment")
    }

    pub fn a_side(&self) -> BTreeSet<Vertex> {
        self.live().map(|(_, s)| s.a_endpoint()).collect()
    }

    pub fn b_side(&self) -> BTreeSet<Vertex> {
        self.live().map(|(_, s)| s.b_endpoint()).collect()
    }

    /// Number of vertices currently placed in segments.
    pub fn placed(&self) -> usize {
        self.live().map(|(_, s)| s.vertices.len()).sum()
    }

    pub fn find_vertex(&self, v: Vertex) -> Option<(SegId, usize)> {
        self.locate.get(&v).copied().filter(|&(id, _)| self.segments[id].is_some())
    }

    fn index_segment(&mut self, id: SegId) {
        let verts: Vec<(Vertex, usize)> = self.segments[id]
            .as_ref()
            .expect("live")
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        for (v, i) in verts {
            self.locate.insert(v, (id, i));
        }
    }

    fn push_segment(&mut self, seg: Segment) -> SegId {
        let id = self.segments.len();
        self.segments.push(Some(seg));
        self.index_segment(id);
        id
    }

    fn set_neighbor_link(&mut self, of: Option<(SegId, End)>, to: Option<(SegId, End)>) {
        if let Some((nid, nend)) = of {
            self.segments[nid]
                .as_mut()
                .expect("live neighbor")
                .set_link(nend, to);
        }
    }

    /// Blocks: maximal chains of segments joined end-to-end by original
    /// path edges, each listed once.
    pub fn blocks(&self) -> Vec<Vec<SegId>> {
        let mut seen = vec![false; self.segments.len()];
        let mut out = Vec::new();
        for (id, _) in self.live() {
            if seen[id] {
                continue;
            }
            // walk to the chain start
            let mut start = (id, End::Front);
            let mut guard = 0usize;
            while let Some((nid, nend)) = self.seg(start.0).link(start.1) {
                start = (nid, nend.other());
                guard += 1;
                assert!(guard <= self.segments.len(), "cyclic block chain");
            }
            // walk the chain to the far extreme
            let mut chain = Vec::new();
            let mut cur = start;
            loop {
                seen[cur.0] = true;
                chain.push(cur.0);
                match self.seg(cur.0).link(cur.1.other()) {
                    Some((nid, nend)) => cur = (nid, nend),
                    None => break,
                }
            }
            out.push(chain);
        }
        out
    }

    /// Structural block violations: facing endpoints not joined by an
    /// original path edge, extremes not of type A, or extremes known bad.
    /// Mutations must never increase this count.
    pub fn block_violations(&self) -> usize {
        let mut bad = 0;
        for chain in self.blocks() {
            for w in chain.windows(2) {
                let sa = self.seg(w[0]);
                let joined = [End::Front, End::Back]
                    .into_iter()
                    .find(|&e| sa.link(e).map(|(nid, _)| nid) == Some(w[1]));
                match joined {
                    None => bad += 1,
                    Some(e) => {
                        let va = sa.end_vertex(e);
                        let (nid, nend) = sa.link(e).unwrap();
                        let vb = self.seg(nid).end_vertex(nend);
                        if !self.pedge.contains_key(&canon(va, vb)) {
                            bad += 1;
                        }
                    }
                }
            }
            for &id in &[chain[0], *chain.last().unwrap()] {
                let seg = self.seg(id);
                for end in [End::Front, End::Back] {
                    if seg.link(end).is_some() {
                        continue;
                    }
                    let v = seg.end_vertex(end);
                    if v != seg.a_endpoint() {
                        bad += 1;
                    } else if let Some(false) = self.b1_good.get(&v) {
                        bad += 1;
                    }
                }
            }
        }
        bad
    }
}

/// Splits the path into `floor(|P|/L)` intervals of exactly `L` vertices.
/// The remainder, and the final interval when needed so that both extreme
/// endpoints land on the A side, are discarded into the leftover pool.
pub fn split_into_segments(
    path: &RainbowPath,
    l: u32,
) -> Result<(SegmentSystem, Vec<Unit>), SegmentError> {
    let m = path.vertices.len();
    let lu = l as usize;
    if lu < 2 || m < 2 * lu {
        return Err(SegmentError::PathTooShort { len: m, l });
    }
    let mut r = m / lu;
    let mut leftovers = Vec::new();
    if m % lu != 0 {
        let start = r * lu;
        leftovers.push(Unit {
            vertices: path.vertices[start..].to_vec(),
            colors: path.colors[start..m - 1].to_vec(),
            kind: UnitKind::PathRemainder,
        });
    }
    if r % 2 != 0 {
        // discard the final interval so both extremes are type A
        let start = (r - 1) * lu;
        let end = r * lu;
        leftovers.push(Unit {
            vertices: path.vertices[start..end].to_vec(),
            colors: path.colors[start..end - 1].to_vec(),
            kind: UnitKind::PathRemainder,
        });
        r -= 1;
    }
    if r < 2 {
        return Err(SegmentError::PathTooShort { len: m, l });
    }

    let mut pedge = HashMap::new();
    for (w, &c) in path.vertices.windows(2).zip(path.colors.iter()) {
        pedge.insert(canon(w[0], w[1]), c);
    }

    let mut sys = SegmentSystem {
        segments: Vec::with_capacity(r),
        stage: EndpointStage::A1B1,
        l,
        b1: BTreeSet::new(),
        b1_good: HashMap::new(),
        counts_b1: HashMap::new(),
        a2_good: HashMap::new(),
        counts_a2: HashMap::new(),
        counts_final_out: HashMap::new(),
        counts_final_in: HashMap::new(),
        used_orig: BTreeSet::new(),
        pedge,
        locate: HashMap::new(),
        absorb_count: 0,
        merge_count: 0,
    };
    for k in 0..r {
        let vs = path.vertices[k * lu..(k + 1) * lu].to_vec();
        let cs = path.colors[k * lu..(k + 1) * lu - 1].to_vec();
        let seg = Segment {
            vertices: vs,
            colors: cs,
            // alternate orientation so facing endpoints share a side
            a_first: k % 2 == 0,
            orig_index: Some(k),
            link_front: if k > 0 { Some((k - 1, End::Back)) } else { None },
            link_back: if k + 1 < r { Some((k + 1, End::Front)) } else { None },
        };
        sys.push_segment(seg);
    }
    sys.b1 = sys.b_side();
    Ok((sys, leftovers))
}

/// Reveals numeric out-degree counts toward one endpoint side (locations
/// stay hidden) and sets goodness flags at the construction threshold.
pub fn expose_endpoint_degrees(
    s: &LayeredSample,
    ds: &DangerousSets,
    sys: &mut SegmentSystem,
    side: ExposeSide,
    ledger: &mut ExposureLedger,
) -> Result<(), SegmentError> {
    let threshold = s.params.goodness_threshold(180.0);
    match side {
        ExposeSide::TowardB => {
            let queried: Vec<Vertex> = sys
                .live()
                .flat_map(|(_, seg)| seg.vertices.iter().copied())
                .filter(|v| !sys.b1.contains(v))
                .collect();
            for v in queried {
                if sys.counts_b1.contains_key(&v) {
                    continue;
                }
                ledger.reveal_count(0, v, CountTag::TowardB1)?;
                let count = residual_count_into(s, ds, v, &sys.b1);
                sys.counts_b1.insert(v, count);
                sys.b1_good.insert(v, f64::from(count) >= threshold);
            }
        }
        ExposeSide::TowardA => {
            let targets = sys.a_side();
            let queried: Vec<Vertex> = sys.live().map(|(_, seg)| seg.b_endpoint()).collect();
            for b in queried {
                if sys.counts_a2.contains_key(&b) {
                    continue;
                }
                ledger.reveal_count(0, b, CountTag::TowardA2)?;
                let count = residual_count_into(s, ds, b, &targets);
                sys.counts_a2.insert(b, count);
                sys.a2_good.insert(b, f64::from(count) >= threshold);
            }
        }
    }
    Ok(())
}

/// Count of still-hidden layer-1 class arcs from `v` into `targets`.
fn residual_count_into(
    s: &LayeredSample,
    ds: &DangerousSets,
    v: Vertex,
    targets: &BTreeSet<Vertex>,
) -> u32 {
    let out = s.layers[0].out_list(v);
    ds.residual_slots[(v - 1) as usize][0]
        .iter()
        .filter(|&&slot| targets.contains(&out[slot as usize].0))
        .count() as u32
}

/// A candidate attachment point on a pristine host interval.
#[derive(Debug, Clone, Copy)]
struct HostCandidate {
    orig_index: usize,
    seg: SegId,
    pos: usize,
    color: Color,
}

/// Absorbs all leftover units in order. Each unit is threaded between two
/// pristine host intervals whose original indices keep a gap of at least 2
/// from each other and from everything used before, at interior attachment
/// points with good B-direction neighbors, via two fresh third-class
/// colors.
pub fn absorb_leftovers(
    sys: &mut SegmentSystem,
    units: &[Unit],
    s: &LayeredSample,
    ds: &DangerousSets,
    used_colors: &mut ColorSet,
    ledger: &mut ExposureLedger,
) -> Result<(), SegmentError> {
    let before = sys.block_violations();
    let mut exposed: BTreeSet<Vertex> = BTreeSet::new();
    for (idx, unit) in units.iter().enumerate() {
        absorb_one(sys, idx, unit, s, ds, used_colors, ledger, &mut exposed)?;
        debug_assert!(
            sys.block_violations() <= before,
            "absorption introduced block violations"
        );
    }
    sys.stage = EndpointStage::A2B2;
    Ok(())
}

/// Candidates reachable from one unit endpoint: exposes its full residual
/// third-layer out-list, then keeps targets that satisfy the host-side
/// conditions.
#[allow(clippy::too_many_arguments)]
fn endpoint_candidates(
    sys: &SegmentSystem,
    e: Vertex,
    s: &LayeredSample,
    ds: &DangerousSets,
    used_colors: &ColorSet,
    ledger: &mut ExposureLedger,
    exposed: &mut BTreeSet<Vertex>,
    saw_arc: &mut bool,
    saw_fresh: &mut bool,
) -> Result<Vec<HostCandidate>, SegmentError> {
    let out = s.layers[2].out_list(e);
    if exposed.insert(e) {
        for &slot in &ds.residual_slots[(e - 1) as usize][2] {
            ledger.reveal_arc_location_idempotent(2, e, slot);
            ledger.reveal_arc_color(2, e, slot)?;
        }
    }
    let lu = sys.l as usize;
    let mut cands = Vec::new();
    for &slot in &ds.residual_slots[(e - 1) as usize][2] {
        let (x, color) = out[slot as usize];
        // the undirected third-class edge must really exist
        let mut conflict = false;
        for (layer, a, b) in [(0u8, e, x), (1u8, e, x), (0u8, x, e), (1u8, x, e), (2u8, x, e)] {
            let present = s.layers[layer as usize].has_arc(a, b);
            ledger.probe_pair(layer, a, b, present)?;
            if present {
                conflict = true;
            }
        }
        if conflict {
            continue;
        }
        *saw_arc = true;
        if used_colors.contains(color) {
            continue;
        }
        *saw_fresh = true;
        let Some((seg_id, pos)) = sys.find_vertex(x) else { continue };
        let seg = sys.seg(seg_id);
        let Some(orig) = seg.orig_index else { continue };
        // separation from everything already used
        if sys.used_orig.iter().any(|&u| orig.abs_diff(u) < 2) {
            continue;
        }
        // interior, at least two path edges from both interval endpoints
        if pos < 2 || pos + 3 > lu {
            continue;
        }
        // the neighbor toward the B endpoint becomes a new A endpoint
        let xp_pos = if seg.a_first { pos + 1 } else { pos - 1 };
        let xp = seg.vertices[xp_pos];
        if !sys.b1_good.get(&xp).copied().unwrap_or(false) {
            continue;
        }
        cands.push(HostCandidate { orig_index: orig, seg: seg_id, pos, color });
    }
    cands.sort_by_key(|c| (c.orig_index, c.pos, c.color));
    Ok(cands)
}

#[allow(clippy::too_many_arguments)]
fn absorb_one(
    sys: &mut SegmentSystem,
    unit_idx: usize,
    unit: &Unit,
    s: &LayeredSample,
    ds: &DangerousSets,
    used_colors: &mut ColorSet,
    ledger: &mut ExposureLedger,
    exposed: &mut BTreeSet<Vertex>,
) -> Result<(), SegmentError> {
    let front = unit.vertices[0];
    let back = *unit.vertices.last().unwrap();
    let mut saw_arc = false;
    let mut saw_fresh = false;
    let cands_front = endpoint_candidates(
        sys, front, s, ds, used_colors, ledger, exposed, &mut saw_arc, &mut saw_fresh,
    )?;
    let cands_back = if back == front {
        cands_front.clone()
    } else {
        endpoint_candidates(
            sys, back, s, ds, used_colors, ledger, exposed, &mut saw_arc, &mut saw_fresh,
        )?
    };

    // Try both unit orientations: (front->x, back->y) then the reverse.
    for (xs, ys, reversed) in
        [(&cands_front, &cands_back, false), (&cands_back, &cands_front, true)]
    {
        for cx in xs.iter() {
            for cy in ys.iter() {
                if cx.seg == cy.seg
                    || cx.orig_index.abs_diff(cy.orig_index) < 2
                    || cx.color == cy.color
                {
                    continue;
                }
                // the y-side host must continue through its A endpoint into
                // a live interval; the continuation is consumed wholesale,
                // so it also keeps the separation gap from the x-side host
                // (otherwise the splice could close a block into a cycle)
                let seg_y = sys.seg(cy.seg);
                let Some((z_id, z_end)) = seg_y.link(seg_y.end_of_a()) else { continue };
                let zi = sys
                    .seg(z_id)
                    .orig_index
                    .expect("continuation interval is pristine by the separation rule");
                if zi.abs_diff(cx.orig_index) < 2 {
                    continue;
                }
                commit_absorb(sys, unit, *cx, *cy, (z_id, z_end), reversed, used_colors);
                return Ok(());
            }
        }
    }

    let reason = if !saw_arc {
        AbsorbReason::NoUsableG3Arc
    } else if !saw_fresh {
        AbsorbReason::ColorExhausted
    } else {
        AbsorbReason::NoSeparatedHost
    };
    Err(SegmentError::Absorb { unit: unit_idx, reason })
}

struct SeveredPiece {
    vertices: Vec<Vertex>,
    colors: Vec<Color>,
    /// True when the fresh A-endpoint (the good neighbor) is at the front.
    a_first: bool,
    /// The host's old link at its B end.
    outer_link: Option<(SegId, End)>,
    /// The host's old (id, end) the outer link used to point back to.
    old_ref: (SegId, End),
}

impl SeveredPiece {
    fn b_link_end(&self) -> End {
        if self.a_first {
            End::Back
        } else {
            End::Front
        }
    }
}

/// Cuts a host at position `pos`: the A-side part oriented from the
/// A-endpoint to the attachment vertex, the A-side outer link and its old
/// reference, plus the severed B-side piece.
fn cut_host(
    id: SegId,
    seg: &Segment,
    pos: usize,
) -> (Vec<Vertex>, Vec<Color>, Option<(SegId, End)>, (SegId, End), SeveredPiece) {
    if seg.a_first {
        let head_v = seg.vertices[..=pos].to_vec();
        let head_c = seg.colors[..pos].to_vec();
        let piece = SeveredPiece {
            vertices: seg.vertices[pos + 1..].to_vec(),
            colors: seg.colors[pos + 1..].to_vec(),
            a_first: true,
            outer_link: seg.link_back,
            old_ref: (id, End::Back),
        };
        (head_v, head_c, seg.link_front, (id, End::Front), piece)
    } else {
        let head_v: Vec<Vertex> = seg.vertices[pos..].iter().rev().copied().collect();
        let head_c: Vec<Color> = seg.colors[pos..].iter().rev().copied().collect();
        let piece = SeveredPiece {
            vertices: seg.vertices[..pos].to_vec(),
            colors: seg.colors[..pos - 1].to_vec(),
            a_first: false,
            outer_link: seg.link_front,
            old_ref: (id, End::Front),
        };
        (head_v, head_c, seg.link_back, (id, End::Back), piece)
    }
}

/// Vertices/colors of `seg` oriented starting from `from`, plus the link at
/// the far end.
fn orient_from(seg: &Segment, from: End) -> (Vec<Vertex>, Vec<Color>, Option<(SegId, End)>) {
    match from {
        End::Front => (seg.vertices.clone(), seg.colors.clone(), seg.link_back),
        End::Back => (
            seg.vertices.iter().rev().copied().collect(),
            seg.colors.iter().rev().copied().collect(),
            seg.link_front,
        ),
    }
}

/// Performs the surgery for one absorption.
fn commit_absorb(
    sys: &mut SegmentSystem,
    unit: &Unit,
    cx: HostCandidate,
    cy: HostCandidate,
    z_ref: (SegId, End),
    reversed: bool,
    used_colors: &mut ColorSet,
) {
    let (z_id, z_end) = z_ref;
    let seg_x = sys.segments[cx.seg].take().expect("live host");
    let seg_y = sys.segments[cy.seg].take().expect("live host");
    let seg_z = sys.segments[z_id].take().expect("live continuation");

    // Head: A-endpoint of the x-host up to x.
    let (head_v, head_c, head_outer, head_old_ref, n1) = cut_host(cx.seg, &seg_x, cx.pos);
    // Tail: y up to the A-endpoint of the y-host.
    let (tail_rev_v, tail_rev_c, _, _, n2) = cut_host(cy.seg, &seg_y, cy.pos);
    let tail_v: Vec<Vertex> = tail_rev_v.into_iter().rev().collect();
    let tail_c: Vec<Color> = tail_rev_c.into_iter().rev().collect();

    let (unit_v, unit_c): (Vec<Vertex>, Vec<Color>) = if reversed {
        (
            unit.vertices.iter().rev().copied().collect(),
            unit.colors.iter().rev().copied().collect(),
        )
    } else {
        (unit.vertices.clone(), unit.colors.clone())
    };

    // Continuation: traverse z from its facing end through to its far end.
    let (z_v, z_c, z_far_link) = orient_from(&seg_z, z_end);
    let a_y = *tail_v.last().unwrap();
    let join_color = *sys
        .pedge
        .get(&canon(a_y, z_v[0]))
        .expect("continuation joined by an original path edge");

    let mut vertices = head_v;
    let mut colors = head_c;
    colors.push(cx.color);
    vertices.extend(unit_v);
    colors.extend(unit_c);
    colors.push(cy.color);
    vertices.extend(tail_v);
    colors.extend(tail_c);
    colors.push(join_color);
    vertices.extend(z_v);
    colors.extend(z_c);
    debug_assert_eq!(colors.len() + 1, vertices.len());

    let spliced_id = sys.segments.len();
    let n1_id = spliced_id + 1;
    let n2_id = spliced_id + 2;

    // Ends of consumed segments that survive under new names.
    let mut remap: HashMap<(SegId, End), (SegId, End)> = HashMap::new();
    remap.insert(head_old_ref, (spliced_id, End::Front));
    remap.insert(n1.old_ref, (n1_id, n1.b_link_end()));
    remap.insert(n2.old_ref, (n2_id, n2.b_link_end()));
    remap.insert((z_id, z_end.other()), (spliced_id, End::Back));
    let resolve = |link: Option<(SegId, End)>| -> Option<(SegId, End)> {
        link.map(|r| remap.get(&r).copied().unwrap_or(r))
    };

    let n1_b_end = n1.b_link_end();
    let n2_b_end = n2.b_link_end();
    let spliced = Segment {
        vertices,
        colors,
        a_first: true,
        orig_index: None,
        link_front: resolve(head_outer),
        link_back: resolve(z_far_link),
    };
    let n1_seg = Segment {
        vertices: n1.vertices,
        colors: n1.colors,
        a_first: n1.a_first,
        orig_index: None,
        link_front: if n1.a_first { None } else { resolve(n1.outer_link) },
        link_back: if n1.a_first { resolve(n1.outer_link) } else { None },
    };
    let n2_seg = Segment {
        vertices: n2.vertices,
        colors: n2.colors,
        a_first: n2.a_first,
        orig_index: None,
        link_front: if n2.a_first { None } else { resolve(n2.outer_link) },
        link_back: if n2.a_first { resolve(n2.outer_link) } else { None },
    };

    let links_to_fix: Vec<(Option<(SegId, End)>, (SegId, End))> = vec![
        (spliced.link_front, (spliced_id, End::Front)),
        (spliced.link_back, (spliced_id, End::Back)),
        (n1_seg.link(n1_b_end), (n1_id, n1_b_end)),
        (n2_seg.link(n2_b_end), (n2_id, n2_b_end)),
    ];

    let pushed = sys.push_segment(spliced);
    debug_assert_eq!(pushed, spliced_id);
    sys.push_segment(n1_seg);
    sys.push_segment(n2_seg);
    for (target, back_ref) in links_to_fix {
        sys.set_neighbor_link(target, Some(back_ref));
    }

    for c in [cx.color, cy.color] {
        let fresh = used_colors.insert(c);
        debug_assert!(fresh);
    }
    sys.used_orig.insert(cx.orig_index);
    sys.used_orig.insert(cy.orig_index);
    if let Some(zi) = seg_z.orig_index {
        sys.used_orig.insert(zi);
    }
    sys.absorb_count += 1;
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MergeSummary {
    pub merges: usize,
    pub bad_a_endpoints: usize,
    pub bad_b_endpoints: usize,
    pub final_r: usize,
}

/// Merges away bad endpoints using original path edges within blocks, then
/// re-checks every surviving endpoint at the final threshold against the
/// final sides. A merge joins three consecutive segments, preserving the
/// one-A-one-B parity of every segment.
pub fn merge_bad_endpoints(
    sys: &mut SegmentSystem,
    s: &LayeredSample,
    ds: &DangerousSets,
    ledger: &mut ExposureLedger,
) -> Result<MergeSummary, SegmentError> {
    let is_bad = |sys: &SegmentSystem, seg: &Segment, v: Vertex| {
        if v == seg.a_endpoint() {
            !sys.b1_good.get(&v).copied().unwrap_or(false)
        } else {
            !sys.a2_good.get(&v).copied().unwrap_or(false)
        }
    };
    let bad_a = sys
        .live()
        .filter(|(_, seg)| !sys.b1_good.get(&seg.a_endpoint()).copied().unwrap_or(false))
        .count();
    let bad_b = sys
        .live()
        .filter(|(_, seg)| !sys.a2_good.get(&seg.b_endpoint()).copied().unwrap_or(false))
        .count();

    // Internalize bad endpoints that sit at a join.
    loop {
        let target = sys.live().find_map(|(id, seg)| {
            for end in [End::Front, End::Back] {
                let v = seg.end_vertex(end);
                if is_bad(sys, seg, v) && seg.link(end).is_some() {
                    return Some((id, end, v));
                }
            }
            None
        });
        let Some((id, end, v)) = target else { break };
        merge_triple(sys, id, end, v)?;
    }

    // Bad block extremes get one merge attempt into their chain; the final
    // threshold below has the last word.
    loop {
        let target = sys.live().find_map(|(id, seg)| {
            if seg.orig_index.is_none() {
                return None; // already merged once
            }
            for end in [End::Front, End::Back] {
                let v = seg.end_vertex(end);
                if v == seg.a_endpoint()
                    && !sys.b1_good.get(&v).copied().unwrap_or(false)
                    && seg.link(end).is_none()
                    && seg.link(end.other()).is_some()
                {
                    return Some((id, end.other(), v));
                }
            }
            None
        });
        let Some((id, end, v)) = target else { break };
        if merge_triple(sys, id, end, v).is_err() {
            // chain too short to merge; leave the extreme for the final check
            break;
        }
    }

    // Final exposure and thresholds against the surviving sides.
    let threshold = s.params.goodness_threshold(200.0);
    let a3 = sys.a_side();
    let b3 = sys.b_side();
    for &a in &a3 {
        ledger.reveal_count(0, a, CountTag::TowardB3)?;
        let count = residual_count_into(s, ds, a, &b3);
        sys.counts_final_out.insert(a, count);
        if f64::from(count) < threshold {
            return Err(SegmentError::Merge { vertex: a });
        }
    }
    for &b in &b3 {
        ledger.reveal_count(0, b, CountTag::TowardA3)?;
        let count = residual_count_into(s, ds, b, &a3);
        sys.counts_final_in.insert(b, count);
        if f64::from(count) < threshold {
            return Err(SegmentError::Merge { vertex: b });
        }
    }
    sys.stage = EndpointStage::A3B3;
    Ok(MergeSummary {
        merges: sys.merge_count,
        bad_a_endpoints: bad_a,
        bad_b_endpoints: bad_b,
        final_r: sys.live_count(),
    })
}

/// Merges segment `id`, its neighbor across `end`, and one more chain
/// neighbor (to keep parity); the bad endpoint at the `id`-neighbor join
/// becomes interior.
fn merge_triple(
    sys: &mut SegmentSystem,
    id: SegId,
    end: End,
    bad_vertex: Vertex,
) -> Result<(), SegmentError> {
    let (t_id, t_end) = sys.seg(id).link(end).expect("join exists");
    // (segment, end to enter it from), in chain order
    let order: [(SegId, End); 3] = if let Some((u_id, u_end)) = sys.seg(t_id).link(t_end.other()) {
        [(id, end.other()), (t_id, t_end), (u_id, u_end)]
    } else if let Some((p_id, p_end)) = sys.seg(id).link(end.other()) {
        [(p_id, p_end.other()), (id, end.other()), (t_id, t_end)]
    } else {
        return Err(SegmentError::Merge { vertex: bad_vertex });
    };

    let mut vertices: Vec<Vertex> = Vec::new();
    let mut colors: Vec<Color> = Vec::new();
    let mut outer_front: Option<(SegId, End)> = None;
    let mut outer_back: Option<(SegId, End)> = None;
    let mut front_is_a = false;
    for (i, &(sid, enter)) in order.iter().enumerate() {
        let seg = sys.segments[sid].take().expect("live chain member");
        let (vs, cs, _) = orient_from(&seg, enter);
        if i == 0 {
            front_is_a = seg.a_endpoint() == vs[0];
            outer_front = seg.link(enter);
            vertices = vs;
            colors = cs;
        } else {
            let join = *sys
                .pedge
                .get(&canon(*vertices.last().unwrap(), vs[0]))
                .expect("merge join edge");
            colors.push(join);
            colors.extend(cs);
            vertices.extend(vs);
        }
        if i == 2 {
            outer_back = seg.link(enter.other());
        }
    }

    let merged = Segment {
        vertices,
        colors,
        a_first: front_is_a,
        orig_index: None,
        link_front: outer_front,
        link_back: outer_back,
    };
    let new_id = sys.segments.len();
    sys.set_neighbor_link(outer_front, Some((new_id, End::Front)));
    sys.set_neighbor_link(outer_back, Some((new_id, End::Back)));
    sys.push_segment(merged);
    sys.merge_count += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dangerous::{grow_s, S0Sets};
    use crate::params::params_from_overrides;
    use crate::sampler::sample_from_arcs;
    use std::collections::BTreeMap;

    fn path(n: u32) -> RainbowPath {
        RainbowPath {
            vertices: (1..=n).collect(),
            colors: (1..n).map(|i| 1000 + i).collect(),
        }
    }

    #[test]
    fn split_12_by_3_gives_4_segments() {
        let (sys, leftovers) = split_into_segments(&path(12), 3).unwrap();
        assert_eq!(sys.live_count(), 4);
        assert!(leftovers.is_empty());
        let blocks = sys.blocks();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].len(), 4);
        // facing endpoints always share a side
        for w in blocks[0].windows(2) {
            let sa = sys.seg(w[0]);
            let sb = sys.seg(w[1]);
            let facing_a = sa.end_vertex(End::Back);
            let facing_b = sb.end_vertex(End::Front);
            assert_eq!(
                facing_a == sa.a_endpoint(),
                facing_b == sb.a_endpoint(),
                "facing endpoints in different sides"
            );
        }
        // both extremes type A
        let first = sys.seg(blocks[0][0]);
        let last = sys.seg(*blocks[0].last().unwrap());
        assert_eq!(first.end_vertex(End::Front), first.a_endpoint());
        assert_eq!(last.end_vertex(End::Back), last.a_endpoint());
    }

    #[test]
    fn split_7_by_3_discards_remainder() {
        let (sys, leftovers) = split_into_segments(&path(7), 3).unwrap();
        assert_eq!(sys.live_count(), 2);
        assert_eq!(leftovers.len(), 1);
        assert_eq!(leftovers[0].vertices, vec![7]);
        assert_eq!(leftovers[0].kind, UnitKind::PathRemainder);
    }

    #[test]
    fn split_parity_discards_final_interval() {
        let (sys, leftovers) = split_into_segments(&path(9), 3).unwrap();
        assert_eq!(sys.live_count(), 2);
        assert_eq!(leftovers.len(), 1);
        assert_eq!(leftovers[0].vertices, vec![7, 8, 9]);
        assert_eq!(leftovers[0].colors.len(), 2);
    }

    #[test]
    fn split_too_short_errors() {
        assert!(matches!(
            split_into_segments(&path(5), 3),
            Err(SegmentError::PathTooShort { .. })
        ));
    }

    struct Fixture {
        s: crate::sampler::LayeredSample,
        ds: DangerousSets,
        sys: SegmentSystem,
        leftovers: Vec<Unit>,
        used: ColorSet,
    }

    /// Path 1..=p_len split at length `l`; vertices above `p_len` are
    /// leftover singles. Layer 1 gets arcs between all same-parity path
    /// vertices (so every endpoint count is positive); layer 3 gets exactly
    /// the given arcs.
    fn fixture(p_len: u32, l: u32, n: u32, g3_arcs: &[(Vertex, Vertex)]) -> Fixture {
        let kappa = 6 * n as u64;
        let params = params_from_overrides(n as u64, [0.2, 0.6, 0.2], kappa, Some(l)).unwrap();
        let c1r = params.class_range(0);
        let c3r = params.class_range(2);
        let mut l1: Vec<(Vertex, Vertex, Color)> = Vec::new();
        let mut c1 = *c1r.start();
        for u in 1..=p_len {
            for v in 1..=p_len {
                if u != v && (u + v) % 2 == 0 {
                    l1.push((u, v, c1));
                    c1 += 1;
                    if c1 > *c1r.end() {
                        c1 = *c1r.start();
                    }
                }
            }
        }
        let mut l3: Vec<(Vertex, Vertex, Color)> = Vec::new();
        let mut c3 = *c3r.start();
        for &(u, v) in g3_arcs {
            l3.push((u, v, c3));
            c3 += 1;
            assert!(c3 <= *c3r.end());
        }
        let s = sample_from_arcs(&params, [&l1, &[], &l3], BTreeMap::new()).unwrap();
        let mut ledger = ExposureLedger::new(false);
        let s0 = S0Sets { parts: [vec![], vec![], vec![]], union: vec![] };
        let ds = grow_s(&s, &s0, 4, &mut ledger).unwrap();
        let (mut sys, mut leftovers) = split_into_segments(&path(p_len), l).unwrap();
        expose_endpoint_degrees(&s, &ds, &mut sys, ExposeSide::TowardB, &mut ledger).unwrap();
        let used = ColorSet::new(params.kappa as u32);
        for v in (p_len + 1)..=n {
            leftovers.push(Unit::single(v));
        }
        Fixture { s, ds, sys, leftovers, used }
    }

    #[test]
    fn absorb_single_vertex_splits_block() {
        // 30-vertex path, L=5 -> 6 intervals in one block. Vertex 31 gets
        // third-layer arcs to the middles of intervals 2 and 4; the only
        // workable assignment hosts at 4 and 2 with continuation interval 1.
        let f = fixture(30, 5, 31, &[(31, 13), (31, 23)]);
        let Fixture { s, ds, mut sys, leftovers, mut used } = f;
        let mut ledger = ExposureLedger::new(false);
        assert_eq!(sys.blocks().len(), 1);
        let b1 = sys.b1.clone();
        absorb_leftovers(&mut sys, &leftovers, &s, &ds, &mut used, &mut ledger).unwrap();
        assert_eq!(sys.absorb_count, 1);
        assert_eq!(sys.placed(), 31, "partition covers every vertex");
        // same-block absorption splits the block in two
        assert_eq!(sys.blocks().len(), 2);
        // B side unchanged, A side count preserved
        assert_eq!(b1, sys.b_side());
        assert_eq!(sys.a_side().len(), 6);
        // the spliced segment threads through 31 and keeps rainbow shape
        let (host, _) = sys.find_vertex(31).expect("vertex placed");
        let seg = sys.seg(host);
        assert!(seg.vertices.contains(&31));
        assert_eq!(seg.colors.len() + 1, seg.vertices.len());
        // chain links stay consistent: every live segment in exactly one block
        let total: usize = sys.blocks().iter().map(|b| b.len()).sum();
        assert_eq!(total, sys.live_count());
        // all internal segment edges carry real colors of the construction
        for (_, seg) in sys.live() {
            for (pair, &c) in seg.vertices.windows(2).zip(seg.colors.iter()) {
                let from_path = sys.pedge.get(&canon(pair[0], pair[1])) == Some(&c);
                let from_g3 = s.g[2].edge_color(pair[0], pair[1]) == Some(c);
                assert!(from_path || from_g3, "edge {pair:?} color {c} unexplained");
            }
        }
    }

    #[test]
    fn absorb_cross_block_makes_three_blocks() {
        // 24 intervals; the first absorption (unit 121) splits the block in
        // two, the second (unit 122) spans both new blocks, yielding three.
        let f = fixture(120, 5, 122, &[(121, 33), (121, 53), (122, 13), (122, 68)]);
        let Fixture { s, ds, mut sys, leftovers, mut used } = f;
        let mut ledger = ExposureLedger::new(false);
        assert_eq!(sys.blocks().len(), 1);
        absorb_leftovers(&mut sys, &leftovers, &s, &ds, &mut used, &mut ledger).unwrap();
        assert_eq!(sys.absorb_count, 2);
        assert_eq!(sys.placed(), 122);
        assert_eq!(sys.blocks().len(), 3, "cross-block splice re-partitions into three");
        assert_eq!(sys.b1, sys.b_side());
        let total: usize = sys.blocks().iter().map(|b| b.len()).sum();
        assert_eq!(total, sys.live_count());
    }

    #[test]
    fn absorb_without_arcs_fails_with_reason() {
        let f = fixture(20, 5, 21, &[]);
        let Fixture { s, ds, mut sys, leftovers, mut used } = f;
        let mut ledger = ExposureLedger::new(false);
        let err =
            absorb_leftovers(&mut sys, &leftovers, &s, &ds, &mut used, &mut ledger).unwrap_err();
        assert!(matches!(
            err,
            SegmentError::Absorb { reason: AbsorbReason::NoUsableG3Arc, .. }
        ));
    }

    #[test]
    fn absorb_rejects_adjacent_hosts() {
        // arcs into intervals 0 and 1 only: separation gap < 2
        let f = fixture(20, 5, 21, &[(21, 3), (21, 8)]);
        let Fixture { s, ds, mut sys, leftovers, mut used } = f;
        let mut ledger = ExposureLedger::new(false);
        let err =
            absorb_leftovers(&mut sys, &leftovers, &s, &ds, &mut used, &mut ledger).unwrap_err();
        assert!(matches!(
            err,
            SegmentError::Absorb { reason: AbsorbReason::NoSeparatedHost, .. }
        ));
    }

    #[test]
    fn absorb_stale_color_reports_exhaustion() {
        let f = fixture(20, 5, 21, &[(21, 3), (21, 13)]);
        let Fixture { s, ds, mut sys, leftovers, mut used } = f;
        // consume every third-class color first
        for c in s.params.class_range(2) {
            used.insert(c);
        }
        let mut ledger = ExposureLedger::new(false);
        let err =
            absorb_leftovers(&mut sys, &leftovers, &s, &ds, &mut used, &mut ledger).unwrap_err();
        assert!(matches!(
            err,
            SegmentError::Absorb { reason: AbsorbReason::ColorExhausted, .. }
        ));
    }

    #[test]
    fn no_leftovers_is_identity() {
        let f = fixture(20, 5, 20, &[]);
        let Fixture { s, ds, mut sys, mut used, .. } = f;
        let mut ledger = ExposureLedger::new(false);
        let a1 = sys.a_side();
        absorb_leftovers(&mut sys, &[], &s, &ds, &mut used, &mut ledger).unwrap();
        assert_eq!(sys.absorb_count, 0);
        assert_eq!(a1, sys.a_side());
        assert_eq!(sys.stage, EndpointStage::A2B2);
    }

    #[test]
    fn merge_three_segment_chain_interior_bad() {
        let f = fixture(30, 5, 30, &[]);
        let Fixture { s, ds, mut sys, .. } = f;
        let mut ledger = ExposureLedger::new(false);
        expose_endpoint_degrees(&s, &ds, &mut sys, ExposeSide::TowardA, &mut ledger).unwrap();
        assert_eq!(sys.live_count(), 6);
        // force one interior A endpoint bad
        let interior_a = sys.seg(2).a_endpoint();
        sys.b1_good.insert(interior_a, false);
        let before = sys.live_count();
        match merge_bad_endpoints(&mut sys, &s, &ds, &mut ledger) {
            Ok(summary) => {
                assert_eq!(summary.final_r, before - 2, "three segments became one");
                for (_, seg) in sys.live() {
                    assert_ne!(seg.a_endpoint(), seg.b_endpoint());
                    assert_eq!(seg.colors.len() + 1, seg.vertices.len());
                }
            }
            Err(SegmentError::Merge { .. }) => {
                assert_eq!(sys.live_count(), before - 2);
            }
            Err(e) => panic!("unexpected: {e}"),
        }
    }

    #[test]
    fn merge_no_bad_endpoints_is_identity() {
        let f = fixture(20, 5, 20, &[]);
        let Fixture { s, ds, mut sys, .. } = f;
        let mut ledger = ExposureLedger::new(false);
        expose_endpoint_degrees(&s, &ds, &mut sys, ExposeSide::TowardA, &mut ledger).unwrap();
        let before = sys.live_count();
        let summary = merge_bad_endpoints(&mut sys, &s, &ds, &mut ledger).unwrap();
        assert_eq!(summary.merges, 0);
        assert_eq!(summary.final_r, before);
    }

    #[test]
    fn merge_two_segment_chain_cannot_internalize() {
        let f = fixture(10, 5, 10, &[]);
        let Fixture { s, ds, mut sys, .. } = f;
        let mut ledger = ExposureLedger::new(false);
        expose_endpoint_degrees(&s, &ds, &mut sys, ExposeSide::TowardA, &mut ledger).unwrap();
        assert_eq!(sys.live_count(), 2);
        // force the joined B endpoint bad: a 2-chain has no third segment
        let b = sys.seg(0).b_endpoint();
        sys.a2_good.insert(b, false);
        let err = merge_bad_endpoints(&mut sys, &s, &ds, &mut ledger).unwrap_err();
        assert!(matches!(err, SegmentError::Merge { .. }));
    }

    #[test]
    fn threshold_arithmetic_relation() {
        // exact rational identity behind the re-threshold slack:
        // 1/180 - 1/200 = 1/1800
        assert_eq!(
            (200 - 180) as i64 * 1800,
            180i64 * 200,
            "1/180 - 1/200 must equal exactly 1/1800"
        );
        let p = params_from_overrides(100, [0.2, 0.6, 0.2], 600, Some(4)).unwrap();
        assert!(p.goodness_threshold(200.0) < p.goodness_threshold(180.0));
    }
}
